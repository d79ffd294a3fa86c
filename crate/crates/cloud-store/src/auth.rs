use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use fogdrive_core::Clock;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Upload,
    Read,
}

impl Scope {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scope::Upload => "upload",
            Scope::Read => "read",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientEntry {
    pub client_id: String,
    pub client_secret: String,
    pub scopes: Vec<Scope>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthToken {
    pub token: String,
    pub client_id: String,
    pub scopes: Vec<Scope>,
    pub expires_at: i64,
}

pub const DEFAULT_TTL_S: i64 = 3600;

/// Client registry plus the live token table.
pub struct Auth {
    clients: HashMap<String, ClientEntry>,
    tokens: Mutex<HashMap<String, AuthToken>>,
    ttl_s: i64,
    clock: Arc<dyn Clock>,
}

impl Auth {
    pub fn new(clients: Vec<ClientEntry>, ttl_s: i64, clock: Arc<dyn Clock>) -> Self {
        Self {
            clients: clients.into_iter().map(|c| (c.client_id.clone(), c)).collect(),
            tokens: Mutex::new(HashMap::new()),
            ttl_s,
            clock,
        }
    }

    pub fn ttl_s(&self) -> i64 {
        self.ttl_s
    }

    pub fn now_ms(&self) -> i64 {
        self.clock.now_ms()
    }

    pub fn issue(&self, client_id: &str, client_secret: &str) -> Result<AuthToken, ApiError> {
        let entry = self
            .clients
            .get(client_id)
            .filter(|c| constant_time_eq(c.client_secret.as_bytes(), client_secret.as_bytes()))
            .ok_or(ApiError::InvalidCredentials)?;
        let mut raw = [0u8; 32];
        rand::rng().fill_bytes(&mut raw);
        let token = AuthToken {
            token: hex::encode(raw),
            client_id: entry.client_id.clone(),
            scopes: entry.scopes.clone(),
            expires_at: self.clock.now_ms() + self.ttl_s * 1000,
        };
        let mut tokens = self.tokens.lock().expect("token table");
        let now = self.clock.now_ms();
        tokens.retain(|_, t| t.expires_at > now - self.ttl_s * 1000);
        tokens.insert(token.token.clone(), token.clone());
        Ok(token)
    }

    /// Resolves a bearer token to its client id, checking expiry then scope.
    pub fn authorize(&self, bearer: Option<&str>, scope: Scope) -> Result<String, ApiError> {
        let bearer = bearer.ok_or(ApiError::Unauthorized)?;
        let tokens = self.tokens.lock().expect("token table");
        let token = tokens.get(bearer).ok_or(ApiError::Unauthorized)?;
        if self.clock.now_ms() >= token.expires_at {
            return Err(ApiError::TokenExpired);
        }
        if !token.scopes.contains(&scope) {
            return Err(ApiError::Forbidden(scope.as_str()));
        }
        Ok(token.client_id.clone())
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

#[cfg(test)]
mod tests {
    use super::*;
    use fogdrive_core::ManualClock;

    fn auth(clock: Arc<ManualClock>) -> Auth {
        Auth::new(
            vec![
                ClientEntry {
                    client_id: "gw".into(),
                    client_secret: "s3cret".into(),
                    scopes: vec![Scope::Upload],
                },
                ClientEntry {
                    client_id: "analyst".into(),
                    client_secret: "pw".into(),
                    scopes: vec![Scope::Read, Scope::Upload],
                },
            ],
            DEFAULT_TTL_S,
            clock,
        )
    }

    #[test]
    fn token_lifecycle() {
        let clock = Arc::new(ManualClock::new(1_000));
        let a = auth(clock.clone());
        let t = a.issue("gw", "s3cret").unwrap();
        assert!(t.token.len() >= 32);
        assert_eq!(t.expires_at, 1_000 + 3_600_000);
        assert_eq!(a.authorize(Some(&t.token), Scope::Upload).unwrap(), "gw");
        assert!(matches!(a.authorize(Some(&t.token), Scope::Read), Err(ApiError::Forbidden("read"))));
        clock.advance(3_600_000);
        assert!(matches!(a.authorize(Some(&t.token), Scope::Upload), Err(ApiError::TokenExpired)));
    }

    #[test]
    fn bad_credentials_and_tokens() {
        let a = auth(Arc::new(ManualClock::new(0)));
        assert!(matches!(a.issue("gw", "nope"), Err(ApiError::InvalidCredentials)));
        assert!(matches!(a.issue("ghost", "s3cret"), Err(ApiError::InvalidCredentials)));
        assert!(matches!(a.authorize(None, Scope::Read), Err(ApiError::Unauthorized)));
        assert!(matches!(a.authorize(Some("x"), Scope::Read), Err(ApiError::Unauthorized)));
    }
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Coupling constants between driving and physiology.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysioParams {
    pub baseline_bpm: f64,
    pub bpm_gain: f64,
    pub baseline_breaths: f64,
    pub breaths_gain: f64,
    /// EMA time constant of the stress level, seconds.
    pub tau_s: f64,
    /// |acceleration| (m/s²) that maps to full stress.
    pub accel_ref: f64,
    pub bpm_noise_sd: f64,
    pub breaths_noise_sd: f64,
}

impl Default for PhysioParams {
    fn default() -> Self {
        Self {
            baseline_bpm: 70.0,
            bpm_gain: 25.0,
            baseline_breaths: 14.0,
            breaths_gain: 10.0,
            tau_s: 30.0,
            accel_ref: 3.0,
            bpm_noise_sd: 2.0,
            breaths_noise_sd: 1.0,
        }
    }
}

/// Stress is an exponential moving average of normalised |acceleration|;
/// heart and breathing rates follow it linearly plus gaussian noise.
#[derive(Debug, Clone)]
pub struct PhysioModel {
    params: PhysioParams,
    stress: f64,
    last_ms: Option<i64>,
    rng: ChaCha8Rng,
}

impl PhysioModel {
    pub fn new(params: PhysioParams, seed: u64) -> Self {
        Self {
            params,
            stress: 0.0,
            last_ms: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn stress(&self) -> f64 {
        self.stress
    }

    /// Integrates the stress EMA up to `t_ms` with `accel_ms2` held since the
    /// previous update.
    pub fn update(&mut self, accel_ms2: f64, t_ms: i64) -> f64 {
        let x = (accel_ms2.abs() / self.params.accel_ref).clamp(0.0, 1.0);
        if let Some(last) = self.last_ms {
            let dt_s = (t_ms - last).max(0) as f64 / 1000.0;
            let alpha = 1.0 - (-dt_s / self.params.tau_s).exp();
            self.stress += (x - self.stress) * alpha;
        }
        self.last_ms = Some(t_ms);
        self.stress = self.stress.clamp(0.0, 1.0);
        self.stress
    }

    /// Noise-free rates for the current stress level.
    pub fn expected(&self) -> (f64, f64) {
        let p = &self.params;
        (
            p.baseline_bpm + p.bpm_gain * self.stress,
            p.baseline_breaths + p.breaths_gain * self.stress,
        )
    }

    /// (bpm, breaths per minute) at `t_ms`.
    pub fn sample(&mut self, accel_ms2: f64, t_ms: i64) -> (f64, f64) {
        self.update(accel_ms2, t_ms);
        let (bpm, breaths) = self.expected();
        let bpm = bpm + gaussian(&mut self.rng, self.params.bpm_noise_sd);
        let breaths = breaths + gaussian(&mut self.rng, self.params.breaths_noise_sd);
        (bpm.clamp(30.0, 220.0), breaths.clamp(4.0, 40.0))
    }

    pub(crate) fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

fn gaussian(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    if sd > 0.0 {
        Normal::new(0.0, sd).map(|n| n.sample(rng)).unwrap_or(0.0)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(model: &mut PhysioModel, accel: f64, secs: i64) -> Vec<(f64, f64)> {
        (0..=secs).map(|s| model.sample(accel, s * 1000)).collect()
    }

    #[test]
    fn calm_driving_converges_to_baseline() {
        let mut m = PhysioModel::new(PhysioParams::default(), 3);
        let xs = run(&mut m, 0.0, 600);
        assert_eq!(m.expected(), (70.0, 14.0));
        let tail = &xs[300..];
        let mean_bpm = tail.iter().map(|x| x.0).sum::<f64>() / tail.len() as f64;
        let mean_br = tail.iter().map(|x| x.1).sum::<f64>() / tail.len() as f64;
        assert!((mean_bpm - 70.0).abs() < 0.5, "{mean_bpm}");
        assert!((mean_br - 14.0).abs() < 0.3, "{mean_br}");
    }

    #[test]
    fn full_stress_plateau() {
        let mut m = PhysioModel::new(PhysioParams::default(), 4);
        let xs = run(&mut m, 5.0, 900);
        assert!(m.stress() > 0.999);
        let tail = &xs[600..];
        let mean_bpm = tail.iter().map(|x| x.0).sum::<f64>() / tail.len() as f64;
        // 70 + 25 * 1
        assert!((mean_bpm - 95.0).abs() < 0.5, "{mean_bpm}");
    }

    #[test]
    fn ema_time_constant() {
        let mut m = PhysioModel::new(PhysioParams::default(), 0);
        m.update(3.0, 0);
        m.update(3.0, 30_000);
        assert!((m.stress() - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn seeded_streams_match() {
        let mut a = PhysioModel::new(PhysioParams::default(), 9);
        let mut b = PhysioModel::new(PhysioParams::default(), 9);
        for t in 0..200 {
            let accel = (t as f64 / 7.0).sin() * 3.0;
            assert_eq!(a.sample(accel, t * 500), b.sample(accel, t * 500));
        }
    }
}

use fogdrive_core::obd::{
    decode_pid, encode_response, parse_response, PidId, PidValue, PID_ENGINE_RPM, PID_THROTTLE_POSITION,
    PID_VEHICLE_SPEED,
};

fn value(v: &PidValue) -> f64 {
    v.as_f64().expect("core pid decodes to a number")
}

#[test]
fn rpm_round_trip_and_monotone_over_all_two_byte_payloads() {
    let pid = PidId::current(PID_ENGINE_RPM);
    let mut prev = f64::NEG_INFINITY;
    for raw in 0..=u16::MAX {
        let data = raw.to_be_bytes();
        let frame = encode_response(pid, &data);
        let parsed = parse_response(&frame, pid).unwrap();
        assert_eq!(parsed.data, data);
        let v = value(&parsed.value);
        assert!(v > prev, "rpm not strictly increasing at {raw}");
        assert_eq!(v, f64::from(raw) / 4.0);
        prev = v;
    }
}

#[test]
fn single_byte_pids_round_trip_and_monotone() {
    for pid in [PID_VEHICLE_SPEED, PID_THROTTLE_POSITION] {
        let pid = PidId::current(pid);
        let mut prev = f64::NEG_INFINITY;
        for a in 0..=u8::MAX {
            let parsed = parse_response(&encode_response(pid, &[a]), pid).unwrap();
            assert_eq!(parsed.data, vec![a]);
            let v = value(&parsed.value);
            assert!(v > prev);
            prev = v;
        }
    }
}

#[test]
fn throttle_bounded() {
    let pid = PidId::current(PID_THROTTLE_POSITION);
    for a in 0..=u8::MAX {
        let v = value(&decode_pid(pid, &[a]).unwrap());
        assert!((0.0..=100.0).contains(&v));
    }
}

#[test]
fn unknown_pids_pass_payload_through() {
    for pid in (0..=u8::MAX).filter(|p| ![PID_ENGINE_RPM, PID_VEHICLE_SPEED, PID_THROTTLE_POSITION].contains(p)) {
        let id = PidId::current(pid);
        for data in [vec![0x00], vec![0xAB, 0xCD], vec![1, 2, 3, 4]] {
            let parsed = parse_response(&encode_response(id, &data), id).unwrap();
            assert_eq!(parsed.value, PidValue::Raw(data.clone()));
        }
    }
}

#[test]
fn decoding_is_pure() {
    let pid = PidId::current(PID_ENGINE_RPM);
    let a = decode_pid(pid, &[0x1A, 0xF0]).unwrap();
    let b = decode_pid(pid, &[0x1A, 0xF0]).unwrap();
    assert_eq!(a, b);
}

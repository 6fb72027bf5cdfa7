mod common;

use common::*;
use sketchguard::batching::Share;

#[test]
fn golden_shares_decode_and_reencode() {
    let cases = golden_cases();
    assert_eq!(cases.len(), 18);
    for c in &cases {
        let (bytes, recorded) = load_golden(c).unwrap();
        assert_eq!(bytes, c.bytes, "{}: fresh encode differs from golden bytes", c.name);
        assert_eq!(recorded, c.oracle, "{}: recorded deltas differ from direct updates", c.name);
        assert_eq!(apply_golden(c, &bytes).unwrap(), recorded, "{}", c.name);
        let share = Share::decode(&bytes, &c.ctx).unwrap();
        assert_eq!(share.encode(&c.ctx).unwrap(), bytes, "{}", c.name);
    }
}

#[test]
fn corrupted_golden_shares_are_rejected() {
    for c in golden_cases() {
        let (bytes, _) = load_golden(&c).unwrap();
        assert!(Share::decode(&bytes[..bytes.len() - 1], &c.ctx).is_err(), "{}", c.name);
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(Share::decode(&longer, &c.ctx).is_err(), "{}", c.name);
        let mut v = bytes.clone();
        v[0] ^= 0x80;
        assert!(Share::decode(&v, &c.ctx).is_err(), "{}", c.name);
    }
}

use sha2::{Digest, Sha256};

/// Fingerprint length for a message of `message_bits` bits:
/// `max(32, ⌈(log₂ |m|)²⌉)`.
pub fn fp_bits(message_bits: u64) -> u32 {
    assert!(message_bits >= 2, "messages carry at least 2 bits");
    let lg = (message_bits as f64).log2();
    let sq = lg * lg;
    // exact for powers of two, where lg is integral
    let sq = if (sq - sq.round()).abs() < 1e-9 { sq.round() } else { sq.ceil() };
    (sq as u32).max(32)
}

/// A truncated SHA-256 digest. Digests longer than 256 bits are extended in
/// counter mode: block `i` is `SHA-256(i as u32 big-endian || m)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fingerprint {
    bits: u32,
    bytes: Vec<u8>,
}

impl Fingerprint {
    pub fn bit_len(&self) -> u32 {
        self.bits
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn to_hex(&self) -> String {
        self.bytes.iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn fingerprint(message: &[u8]) -> Fingerprint {
    fingerprint_with_len(message, fp_bits(message.len() as u64 * 8))
}

pub fn fingerprint_with_len(message: &[u8], bits: u32) -> Fingerprint {
    let nbytes = bits.div_ceil(8) as usize;
    let mut bytes = Vec::with_capacity(nbytes + 32);
    if nbytes <= 32 {
        bytes.extend_from_slice(&Sha256::digest(message));
    } else {
        let mut counter = 0u32;
        while bytes.len() < nbytes {
            let mut h = Sha256::new();
            h.update(counter.to_be_bytes());
            h.update(message);
            bytes.extend_from_slice(&h.finalize());
            counter += 1;
        }
    }
    bytes.truncate(nbytes);
    let spare = nbytes as u32 * 8 - bits;
    if spare > 0 {
        let last = bytes.last_mut().expect("at least one byte");
        *last &= 0xFFu8 << spare;
    }
    Fingerprint { bits, bytes }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lengths() {
        assert_eq!(fp_bits(8192), 169);
        assert_eq!(fp_bits(16), 32);
        assert_eq!(fp_bits(1 << 20), 400);
        assert_eq!(fp_bits(100), 45);
        let f = fingerprint(&[7u8; 1024]);
        assert_eq!(f.bit_len(), 169);
        assert_eq!(f.as_bytes().len(), 22);
        assert_eq!(f.as_bytes()[21] & 0x7F, 0);
    }

    #[test]
    fn deterministic_and_prefix_of_sha256() {
        // 80 bits: ceil(log2(80)^2) = 40
        let m = b"hello grid";
        assert_eq!(fingerprint(m), fingerprint(m));
        assert_eq!(fingerprint(m).bit_len(), 40);
        let full = Sha256::digest(m);
        assert_eq!(fingerprint(m).as_bytes(), &full[..5]);
    }

    #[test]
    fn counter_mode_extension() {
        let f = fingerprint_with_len(b"abc", 400);
        assert_eq!(f.as_bytes().len(), 50);
        let mut h = Sha256::new();
        h.update(1u32.to_be_bytes());
        h.update(b"abc");
        assert_eq!(&f.as_bytes()[32..50], &h.finalize()[..18]);
    }
}

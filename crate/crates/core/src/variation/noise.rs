//! Counter-based deterministic noise: every value is a pure function of a
//! seed and a key, so nothing per-cell is stored.

use std::sync::OnceLock;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fold `v` into running hash `h`.
#[inline]
pub fn fold(h: u64, v: u64) -> u64 {
    mix64(h ^ v.wrapping_add(GOLDEN))
}

/// Uniform in the open interval (0, 1) from a 53-bit slice of `h`.
#[inline]
pub fn unit(h: u64) -> f64 {
    ((h >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

/// Inverse standard normal CDF (Acklam's rational approximation, relative
/// error below 1.2e-9 over (0, 1)).
pub fn inv_norm_cdf(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;
    debug_assert!(p > 0.0 && p < 1.0);
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -inv_norm_cdf(1.0 - p)
    }
}

/// Exact standard normal draw from a hash.
#[inline]
pub fn gaussian(h: u64) -> f64 {
    inv_norm_cdf(unit(h))
}

const TABLE_BITS: u32 = 16;

fn table() -> &'static [f32] {
    static T: OnceLock<Vec<f32>> = OnceLock::new();
    T.get_or_init(|| {
        let n = 1usize << TABLE_BITS;
        (0..n).map(|k| inv_norm_cdf((k as f64 + 0.5) / n as f64) as f32).collect()
    })
}

/// Fast standard normal draw quantized to 2^16 equiprobable levels, used for
/// process noise that is clamped at +-3 sigma anyway.
#[inline]
pub fn gaussian_fast(h: u64) -> f64 {
    table()[(h >> (64 - TABLE_BITS)) as usize] as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn inverse_matches_reference() {
        let n = Normal::new(0.0, 1.0).unwrap();
        for &p in &[1e-9, 1e-4, 0.01, 0.024, 0.2, 0.5, 0.77, 0.99, 1.0 - 1e-6] {
            let z = inv_norm_cdf(p);
            assert!((n.cdf(z) - p).abs() < 1e-8 * p.max(1e-3), "p={p} z={z}");
        }
    }

    #[test]
    fn fast_draws_are_standard_normal() {
        let m = 200_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for i in 0..m {
            let z = gaussian_fast(mix64(i));
            s += z;
            s2 += z * z;
        }
        let mean = s / m as f64;
        let var = s2 / m as f64 - mean * mean;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.02);
    }
}

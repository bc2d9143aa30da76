//! Numerical and seeding utilities shared across the crate.

/// Neumaier-compensated accumulator.
///
/// The variance matrix forms subtract quantities of similar magnitude
/// (`‖H1‖² − (1ᵀH1)²/n` patterns), so the partial sums feeding them are
/// accumulated with compensation to stay accurate for n well beyond 10⁴.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.comp += (self.sum - t) + value;
        } else {
            self.comp += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of an iterator of f64.
pub fn csum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in iter {
        acc.add(v);
    }
    acc.value()
}

/// splitmix64 output function (Steele, Lea & Flood 2014).
#[inline]
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a master seed and a sequence of role tags.
///
/// The derivation is `s ← master`, then for each tag
/// `s ← splitmix64(s ⊕ splitmix64(tag))`, so any (trial, role, index)
/// combination maps to a reproducible stream independent of execution
/// order. This is the scheme that makes single trials re-runnable in
/// isolation: the seed of trial `k` never depends on trials `< k`.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut s = master;
    for &tag in tags {
        let mut t = tag;
        let mixed = splitmix64(&mut t);
        s ^= mixed;
        s = splitmix64(&mut s);
    }
    s
}

/// Role tags for seed derivation (documented constants, part of the
/// reproducibility contract).
pub mod role {
    /// Dataset draw for one trial.
    pub const DATA: u64 = 0x01;
    /// Latent chain for model P, keyed further by observation index.
    pub const CHAIN_P: u64 = 0x02;
    /// Latent chain for model Q.
    pub const CHAIN_Q: u64 = 0x03;
    /// Reference-model weight/topic draw shared by the whole run.
    pub const PARAMS: u64 = 0x04;
    /// Held-out training data shared by the whole run.
    pub const TRAIN: u64 = 0x05;
}

/// Median of a set of values; even counts average the two central
/// order statistics. The input buffer is consumed (reordered).
pub fn median_in_place(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    let n = values.len();
    let mid = n / 2;
    let (_, upper_mid, _) =
        values.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).expect("non-NaN"));
    let upper = *upper_mid;
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

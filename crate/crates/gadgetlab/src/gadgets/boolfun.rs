//! Real-valued functions on {0,1}^n, Walsh-support locality certificates,
//! the R reduction, and the 2^{-k'} separation bound.

use crate::error::{GadgetError, Result};

/// Tolerance for treating a Walsh coefficient as zero (tables are exact
/// dyadic rationals, so anything above roundoff is a genuine coefficient).
const WALSH_TOL: f64 = 1e-9;

/// A real function on {0,1}^n stored as a table of 2^n values.
///
/// Index convention: `x_1` is the most significant bit, `x_n` the least,
/// so the bit string "100" on three inputs is index 4.
#[derive(Debug, Clone, PartialEq)]
pub struct BoolFun {
    n: usize,
    table: Vec<f64>,
}

impl BoolFun {
    pub fn new(n: usize, table: Vec<f64>) -> Result<Self> {
        if table.len() != 1 << n {
            return Err(GadgetError::InvalidParameter {
                reason: format!("table length {} != 2^{n}", table.len()),
            });
        }
        Ok(Self { n, table })
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self {
            n,
            table: vec![value; 1 << n],
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.n
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn value(&self, x: usize) -> f64 {
        self.table[x]
    }

    pub fn max_abs(&self) -> f64 {
        self.table.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    /// Walsh coefficients `2^{-n} sum_x f(x) (-1)^{|S & x|}`, indexed by the
    /// subset bitmask `S` in the same bit convention as the inputs.
    pub fn walsh_coefficients(&self) -> Vec<f64> {
        let size = 1 << self.n;
        let mut coeffs = self.table.clone();
        // in-place fast Walsh-Hadamard butterfly
        let mut h = 1;
        while h < size {
            let mut i = 0;
            while i < size {
                for j in i..i + h {
                    let a = coeffs[j];
                    let b = coeffs[j + h];
                    coeffs[j] = a + b;
                    coeffs[j + h] = a - b;
                }
                i += 2 * h;
            }
            h *= 2;
        }
        let norm = 1.0 / size as f64;
        for c in &mut coeffs {
            *c *= norm;
        }
        coeffs
    }

    /// Largest |S| carrying a non-negligible Walsh coefficient.
    pub fn walsh_degree(&self) -> usize {
        self.walsh_coefficients()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.abs() > WALSH_TOL)
            .map(|(s, _)| s.count_ones() as usize)
            .max()
            .unwrap_or(0)
    }
}

/// True iff the Walsh expansion of `f` is supported on subsets of size <= k;
/// equivalently, `f` is a sum of functions each depending on at most k inputs.
pub fn bool_klocal_check(f: &BoolFun, k: usize) -> Result<bool> {
    if f.n_inputs() > 16 {
        return Err(GadgetError::InvalidParameter {
            reason: "k-local check limited to n <= 16".into(),
        });
    }
    Ok(f.walsh_degree() <= k)
}

/// `Rf(x_1,...,x_{n-1}) = f(...,0) - f(...,1)`, lowering locality by one.
pub fn bool_reduce_r(f: &BoolFun) -> Result<BoolFun> {
    let n = f.n_inputs();
    if n == 0 {
        return Err(GadgetError::InvalidParameter {
            reason: "cannot reduce a 0-input function".into(),
        });
    }
    let mut table = Vec::with_capacity(1 << (n - 1));
    for y in 0..1usize << (n - 1) {
        table.push(f.value(y << 1) - f.value((y << 1) | 1));
    }
    BoolFun::new(n - 1, table)
}

/// The separation witness: equals `(-1)^{x_1 + ... + x_{k-k'}}` whenever the
/// last k' inputs are all zero, and 0 otherwise. It is k-local with
/// `max |f| = 1`, yet no k'-local function approximates it better than
/// `2^{-k'}` in sup norm.
pub fn bool_proof_function(n: usize, k: usize, k_prime: usize) -> Result<BoolFun> {
    if !(0 < k_prime && k_prime < k && k <= n) {
        return Err(GadgetError::InvalidParameter {
            reason: format!("need 0 < k' < k <= n, got n={n} k={k} k'={k_prime}"),
        });
    }
    let low_mask = (1usize << k_prime) - 1;
    let top_width = k - k_prime;
    let top_shift = n - top_width;
    let mut table = vec![0.0; 1 << n];
    for (x, slot) in table.iter_mut().enumerate() {
        if x & low_mask == 0 {
            let parity = ((x >> top_shift) as u32).count_ones();
            *slot = if parity.is_multiple_of(2) { 1.0 } else { -1.0 };
        }
    }
    BoolFun::new(n, table)
}

/// Certified lower bound on `min over k'-local g of max_x |f(x) - g(x)|`:
/// `R^{k'} g` is constant for any k'-local `g`, while each application of R
/// expands into at most two table entries, so the spread of `R^{k'} f`
/// divided by `2 * 2^{k'}` separates `f` from every k'-local function.
pub fn bool_separation_bound(f: &BoolFun, k_prime: usize) -> Result<f64> {
    if f.n_inputs() > 16 {
        return Err(GadgetError::InvalidParameter {
            reason: "separation bound limited to n <= 16".into(),
        });
    }
    if k_prime > f.n_inputs() {
        return Err(GadgetError::InvalidParameter {
            reason: format!("k'={k_prime} exceeds input count {}", f.n_inputs()),
        });
    }
    let mut reduced = f.clone();
    for _ in 0..k_prime {
        reduced = bool_reduce_r(&reduced)?;
    }
    let max = reduced.table().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = reduced.table().iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((max - min) / (2.0 * (1usize << k_prime) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_is_zero_local() {
        let f = BoolFun::constant(4, 2.5);
        assert!(bool_klocal_check(&f, 0).unwrap());
    }

    #[test]
    fn product_function_is_three_local_not_two() {
        // f(x) = x1 x2 x3
        let table: Vec<f64> = (0..8)
            .map(|x: usize| if x == 0b111 { 1.0 } else { 0.0 })
            .collect();
        let f = BoolFun::new(3, table).unwrap();
        assert!(bool_klocal_check(&f, 3).unwrap());
        assert!(!bool_klocal_check(&f, 2).unwrap());
    }

    #[test]
    fn parity_is_top_degree_only() {
        // (-1)^(x1+x2+x3) has a single top Walsh coefficient.
        let table: Vec<f64> = (0..8usize)
            .map(|x| if (x as u32).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 })
            .collect();
        let f = BoolFun::new(3, table).unwrap();
        assert!(bool_klocal_check(&f, 3).unwrap());
        assert!(!bool_klocal_check(&f, 2).unwrap());
        let coeffs = f.walsh_coefficients();
        let big: Vec<usize> = coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| c.abs() > 1e-9)
            .map(|(s, _)| s)
            .collect();
        assert_eq!(big, vec![0b111]);
    }

    #[test]
    fn reduce_constant_gives_zero() {
        let f = BoolFun::constant(3, 1.0);
        let rf = bool_reduce_r(&f).unwrap();
        assert!(rf.table().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reduce_product_two_inputs() {
        // f(x1, x2) = x1 x2  ->  Rf(x1) = f(x1,0) - f(x1,1) = -x1
        let table = vec![0.0, 0.0, 0.0, 1.0];
        let f = BoolFun::new(2, table).unwrap();
        let rf = bool_reduce_r(&f).unwrap();
        assert_eq!(rf.table(), &[0.0, -1.0]);
    }

    #[test]
    fn proof_function_3_3_2_table() {
        let f = bool_proof_function(3, 3, 2).unwrap();
        // +1 at 000, -1 at 100, 0 elsewhere
        let mut expect = vec![0.0; 8];
        expect[0b000] = 1.0;
        expect[0b100] = -1.0;
        assert_eq!(f.table(), expect.as_slice());
        assert_eq!(f.max_abs(), 1.0);
        assert!(bool_klocal_check(&f, 3).unwrap());
    }

    #[test]
    fn double_reduction_recovers_witness() {
        // R^2 f = (-1)^{x1} for the (3,3,2) proof function.
        let f = bool_proof_function(3, 3, 2).unwrap();
        let r2 = bool_reduce_r(&bool_reduce_r(&f).unwrap()).unwrap();
        assert_eq!(r2.table(), &[1.0, -1.0]);
    }

    #[test]
    fn reduction_lowers_walsh_degree_by_one() {
        // Each of the first k' reductions (along the zero-pinned inputs)
        // lowers the certified Walsh locality by exactly one, ending at the
        // (k - k')-local witness.
        for (n, k, kp) in [(3, 3, 2), (4, 3, 1), (5, 4, 2)] {
            let mut f = bool_proof_function(n, k, kp).unwrap();
            let mut degree = f.walsh_degree();
            assert_eq!(degree, k);
            for _ in 0..kp {
                f = bool_reduce_r(&f).unwrap();
                let next = f.walsh_degree();
                assert_eq!(next, degree - 1, "degree drop at n={}", f.n_inputs());
                assert!(bool_klocal_check(&f, next).unwrap());
                assert!(!bool_klocal_check(&f, next - 1).unwrap());
                degree = next;
            }
            assert_eq!(degree, k - kp);
        }
    }

    #[test]
    fn separation_bound_zero_for_local_functions() {
        // a 2-local function is reproduced exactly by itself
        let table = vec![0.0, 0.0, 0.0, 1.0];
        let f = BoolFun::new(2, table).unwrap();
        assert_eq!(bool_separation_bound(&f, 2).unwrap(), 0.0);
    }

    #[test]
    fn separation_bound_proof_function() {
        let f = bool_proof_function(3, 3, 2).unwrap();
        let bound = bool_separation_bound(&f, 2).unwrap();
        assert_eq!(bound, 0.25);
    }

    #[test]
    fn parameter_validation() {
        assert!(bool_proof_function(3, 3, 3).is_err());
        assert!(bool_proof_function(3, 4, 2).is_err());
        assert!(bool_proof_function(3, 3, 0).is_err());
        assert!(BoolFun::new(2, vec![0.0; 3]).is_err());
    }
}

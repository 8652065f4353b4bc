//! Unit-cube point sets: Halton (plain and digit-scrambled), rank-1
//! lattices and seeded Monte Carlo, plus an exact star-discrepancy checker
//! for one and two dimensions.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest distance kept between any coordinate and the cube boundary.
pub const CLAMP_EPS: f64 = f64::EPSILON;

/// Number of primes in the Halton base table.
pub const MAX_HALTON_DIM: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Halton,
    HaltonScrambled,
    Lattice,
    Mc,
}

impl Generator {
    pub fn name(self) -> &'static str {
        match self {
            Generator::Halton => "halton",
            Generator::HaltonScrambled => "halton-scrambled",
            Generator::Lattice => "lattice",
            Generator::Mc => "mc",
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "halton" => Ok(Generator::Halton),
            "halton-scrambled" | "halton_scrambled" => Ok(Generator::HaltonScrambled),
            "lattice" => Ok(Generator::Lattice),
            "mc" => Ok(Generator::Mc),
            other => Err(Error::UnknownSequence {
                name: other.to_string(),
                valid: "halton, halton-scrambled, lattice, mc".to_string(),
            }),
        }
    }
}

/// `s` points in the open unit cube `(0,1)^d`, one per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitPointSet {
    pub generator: Generator,
    /// RNG seed for `mc`, start index for Halton, zero for lattices.
    pub seed_or_start: u64,
    pub points: Array2<f64>,
}

impl UnitPointSet {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }
}

#[inline]
fn clamp_unit(x: f64) -> f64 {
    x.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS)
}

fn check_shape(s: usize, d: usize) -> Result<()> {
    if s == 0 {
        return Err(Error::invalid("point count s must be at least 1"));
    }
    if d == 0 {
        return Err(Error::invalid("dimension d must be at least 1"));
    }
    Ok(())
}

/// The first [`MAX_HALTON_DIM`] primes.
pub fn primes() -> &'static [u64] {
    static PRIMES: OnceLock<Vec<u64>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        // The 1000th prime is 7919.
        let limit = 7920;
        let mut sieve = vec![true; limit];
        sieve[0] = false;
        sieve[1] = false;
        let mut i = 2;
        while i * i < limit {
            if sieve[i] {
                let mut k = i * i;
                while k < limit {
                    sieve[k] = false;
                    k += i;
                }
            }
            i += 1;
        }
        let out: Vec<u64> = (0..limit).filter(|&k| sieve[k]).map(|k| k as u64).collect();
        debug_assert_eq!(out.len(), MAX_HALTON_DIM);
        out
    })
}

/// Van der Corput radical inverse `phi_base(i)`: the base-`base` digits of
/// `i` mirrored about the radix point.
pub fn radical_inverse(mut i: u64, base: u64) -> f64 {
    assert!(base >= 2, "radical inverse base must be at least 2");
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut acc = 0.0;
    while i > 0 {
        acc += (i % base) as f64 * scale;
        i /= base;
        scale *= inv;
    }
    acc
}

/// Radical inverse with every digit passed through the reverse permutation
/// `d -> (base - d) mod base`. Zero stays zero, so the expansion stays finite.
pub fn scrambled_radical_inverse(mut i: u64, base: u64) -> f64 {
    assert!(base >= 2, "radical inverse base must be at least 2");
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut acc = 0.0;
    while i > 0 {
        let digit = i % base;
        let permuted = (base - digit) % base;
        acc += permuted as f64 * scale;
        i /= base;
        scale *= inv;
    }
    acc
}

/// Rows `start_index, start_index+1, ...` of the `d`-dimensional Halton
/// sequence. A start index of 1 skips the origin.
pub fn halton(s: usize, d: usize, scramble: bool, start_index: u64) -> Result<UnitPointSet> {
    check_shape(s, d)?;
    if d > MAX_HALTON_DIM {
        return Err(Error::DimensionTooLarge { d, max: MAX_HALTON_DIM });
    }
    let bases = &primes()[..d];
    let mut points = Array2::<f64>::zeros((s, d));
    points
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            let idx = start_index + i as u64;
            for (x, &b) in row.iter_mut().zip(bases) {
                let v = if scramble {
                    scrambled_radical_inverse(idx, b)
                } else {
                    radical_inverse(idx, b)
                };
                *x = clamp_unit(v);
            }
        });
    Ok(UnitPointSet {
        generator: if scramble {
            Generator::HaltonScrambled
        } else {
            Generator::Halton
        },
        seed_or_start: start_index,
        points,
    })
}

/// Rank-1 lattice `{ frac(i z / s) : i = 0..s }`.
pub fn lattice(s: usize, generating_vector: &[u64]) -> Result<UnitPointSet> {
    let d = generating_vector.len();
    check_shape(s, d)?;
    let n = s as u128;
    let z: Vec<u128> = generating_vector.iter().map(|&g| g as u128 % n).collect();
    let mut points = Array2::<f64>::zeros((s, d));
    for (i, mut row) in points.axis_iter_mut(Axis(0)).enumerate() {
        for (x, &zj) in row.iter_mut().zip(&z) {
            let num = (i as u128 * zj) % n;
            *x = clamp_unit(num as f64 / s as f64);
        }
    }
    Ok(UnitPointSet {
        generator: Generator::Lattice,
        seed_or_start: 0,
        points,
    })
}

/// Korobov generating vector `(1, a, a², ...) mod s`.
pub fn korobov_vector(s: usize, d: usize, a: u64) -> Vec<u64> {
    let n = s.max(1) as u128;
    let mut out = Vec::with_capacity(d);
    let mut cur: u128 = 1 % n;
    for _ in 0..d {
        out.push(cur as u64);
        cur = (cur * a as u128) % n;
    }
    out
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Korobov generating vector whose lattice minimizes the P2 figure of merit
/// `sum_i prod_j (1 + 2 pi² B2(x_ij))` over multipliers coprime to `s`.
/// At most 512 evenly spaced multipliers are tried.
pub fn korobov_search(s: usize, d: usize) -> Vec<u64> {
    if s <= 2 || d <= 1 {
        return korobov_vector(s, d, 1);
    }
    let coprime: Vec<u64> = (1..s as u64).filter(|&a| gcd(a, s as u64) == 1).collect();
    let stride = coprime.len().div_ceil(512).max(1);
    let two_pi2 = 2.0 * std::f64::consts::PI * std::f64::consts::PI;
    let merit = |a: u64| -> f64 {
        let z = korobov_vector(s, d, a);
        (0..s as u128)
            .map(|i| {
                z.iter()
                    .map(|&zj| {
                        let x = ((i * zj as u128) % s as u128) as f64 / s as f64;
                        1.0 + two_pi2 * (x * x - x + 1.0 / 6.0)
                    })
                    .product::<f64>()
            })
            .sum()
    };
    let best = coprime
        .par_iter()
        .step_by(stride)
        .map(|&a| (merit(a), a))
        .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)))
        .map(|(_, a)| a)
        .unwrap_or(1);
    korobov_vector(s, d, best)
}

/// I.i.d. uniform points from a ChaCha8 stream seeded with `seed`.
pub fn mc_uniform(s: usize, d: usize, seed: u64) -> Result<UnitPointSet> {
    check_shape(s, d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = Array2::from_shape_simple_fn((s, d), || clamp_unit(rng.random::<f64>()));
    Ok(UnitPointSet {
        generator: Generator::Mc,
        seed_or_start: seed,
        points,
    })
}

/// Exact star discrepancy `sup_x |vol[0,x) - #(P in [0,x)) / s|` for `d <= 2`.
///
/// The supremum is attained on the grid of point coordinates (plus 1):
/// volume excess is checked against open boxes, count excess against
/// closed ones. `O(s²)` in two dimensions.
pub fn star_discrepancy_bruteforce(set: &UnitPointSet) -> Result<f64> {
    let pts = &set.points;
    let s = pts.nrows();
    if s == 0 {
        return Err(Error::Empty("point set".into()));
    }
    match pts.ncols() {
        1 => {
            let mut xs: Vec<f64> = pts.column(0).to_vec();
            xs.sort_by(f64::total_cmp);
            let n = s as f64;
            let mut worst: f64 = 0.0;
            for (i, &x) in xs.iter().enumerate() {
                worst = worst.max((i + 1) as f64 / n - x).max(x - i as f64 / n);
            }
            Ok(worst)
        }
        2 => Ok(star_discrepancy_2d(pts)),
        d => Err(Error::invalid(format!(
            "brute-force star discrepancy supports d <= 2, got d = {d}"
        ))),
    }
}

fn star_discrepancy_2d(pts: &Array2<f64>) -> f64 {
    let s = pts.nrows();
    let n = s as f64;
    let mut gx: Vec<f64> = pts.column(0).to_vec();
    let mut gy: Vec<f64> = pts.column(1).to_vec();
    gx.push(1.0);
    gy.push(1.0);
    gx.sort_by(f64::total_cmp);
    gx.dedup();
    gy.sort_by(f64::total_cmp);
    gy.dedup();

    // Points sorted by x; y replaced by its grid rank.
    let mut order: Vec<(f64, usize)> = pts
        .axis_iter(Axis(0))
        .map(|p| {
            let rank = gy.partition_point(|&g| g < p[1]);
            (p[0], rank)
        })
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));

    let m = gy.len();
    let mut below_open = vec![0usize; m];
    let mut next = 0;
    let mut worst: f64 = 0.0;
    for &x in &gx {
        // Open box in x: points with px < x.
        while next < s && order[next].0 < x {
            below_open[order[next].1] += 1;
            next += 1;
        }
        let mut strict = 0usize;
        for (k, &y) in gy.iter().enumerate() {
            // #(px < x, py < y): ranks strictly below k.
            worst = worst.max(x * y - strict as f64 / n);
            strict += below_open[k];
        }
        // Closed box: also include points with px == x.
        let mut closed_cnt = below_open.clone();
        let mut j = next;
        while j < s && order[j].0 == x {
            closed_cnt[order[j].1] += 1;
            j += 1;
        }
        let mut le = 0usize;
        for (k, &y) in gy.iter().enumerate() {
            le += closed_cnt[k];
            worst = worst.max(le as f64 / n - x * y);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn radical_inverse_hand_values() {
        assert_eq!(radical_inverse(0, 2), 0.0);
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert!((radical_inverse(1, 3) - 1.0 / 3.0).abs() < 1e-16);
        assert!((radical_inverse(2, 3) - 2.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn prime_table() {
        let p = primes();
        assert_eq!(p.len(), 1000);
        assert_eq!(&p[..5], &[2, 3, 5, 7, 11]);
        assert_eq!(p[999], 7919);
    }

    #[test]
    fn halton_first_rows() {
        let h = halton(1, 2, false, 1).unwrap();
        assert_eq!(h.points[[0, 0]], 0.5);
        assert!((h.points[[0, 1]] - 1.0 / 3.0).abs() < 1e-16);

        let h = halton(3, 1, false, 1).unwrap();
        assert_eq!(h.points.column(0).to_vec(), vec![0.5, 0.25, 0.75]);
    }

    #[test]
    fn scrambling_is_identity_in_base_two() {
        let a = halton(64, 1, false, 1).unwrap();
        let b = halton(64, 1, true, 1).unwrap();
        assert_eq!(a.points, b.points);
        assert_eq!(b.generator, Generator::HaltonScrambled);
        // Base 3 actually changes: 1 -> digit 2 -> 2/3.
        let c = halton(1, 2, true, 1).unwrap();
        assert!((c.points[[0, 1]] - 2.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn halton_rejects_too_many_dims() {
        assert!(matches!(
            halton(4, 1001, false, 1),
            Err(Error::DimensionTooLarge { d: 1001, .. })
        ));
        assert!(halton(4, 1000, false, 1).is_ok());
        assert!(halton(0, 2, false, 1).is_err());
    }

    #[test]
    fn lattice_examples() {
        let l = lattice(4, &[1]).unwrap();
        assert_eq!(l.points.column(0).to_vec(), vec![CLAMP_EPS, 0.25, 0.5, 0.75]);

        let l = lattice(5, &[1, 2]).unwrap();
        let want = [[0.0, 0.0], [0.2, 0.4], [0.4, 0.8], [0.6, 0.2], [0.8, 0.6]];
        for (i, row) in want.iter().enumerate() {
            for j in 0..2 {
                let w = clamp_unit(row[j]);
                assert!((l.points[[i, j]] - w).abs() < 1e-16);
            }
        }

        let l = lattice(7, &[0, 0, 0]).unwrap();
        assert!(l.points.iter().all(|&x| x == CLAMP_EPS));
        assert!(lattice(0, &[1]).is_err());
    }

    #[test]
    fn korobov_vectors() {
        assert_eq!(korobov_vector(11, 4, 3), vec![1, 3, 9, 5]);
        let z = korobov_search(64, 2);
        assert_eq!(z[0], 1);
        assert_eq!(gcd(z[1], 64), 1);
    }

    #[test]
    fn mc_is_deterministic_and_uniform() {
        let a = mc_uniform(50, 3, 7).unwrap();
        let b = mc_uniform(50, 3, 7).unwrap();
        assert_eq!(a.points, b.points);
        assert_ne!(a.points, mc_uniform(50, 3, 8).unwrap().points);

        let big = mc_uniform(100_000, 1, 11).unwrap();
        let col = big.points.column(0);
        let mean = col.mean().unwrap();
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col.len() as f64;
        assert!((mean - 0.5).abs() < 0.005, "mean {mean}");
        assert!((var - 1.0 / 12.0).abs() < 0.002, "var {var}");
    }

    #[test]
    fn star_discrepancy_examples() {
        let single = UnitPointSet {
            generator: Generator::Mc,
            seed_or_start: 0,
            points: Array2::from_elem((1, 1), 0.5),
        };
        assert!((star_discrepancy_bruteforce(&single).unwrap() - 0.5).abs() < 1e-15);

        let s = 10;
        let centered = UnitPointSet {
            generator: Generator::Mc,
            seed_or_start: 0,
            points: Array2::from_shape_fn((s, 1), |(i, _)| (2 * i + 1) as f64 / (2 * s) as f64),
        };
        let d = star_discrepancy_bruteforce(&centered).unwrap();
        assert!((d - 1.0 / (2 * s) as f64).abs() < 1e-14);

        let three_d = mc_uniform(4, 3, 0).unwrap();
        assert!(star_discrepancy_bruteforce(&three_d).is_err());
    }

    /// Exhaustive O(s³) evaluation of the 2-D star discrepancy over the
    /// critical grid, used to check the sweep.
    fn star_2d_naive(pts: &Array2<f64>) -> f64 {
        let n = pts.nrows() as f64;
        let mut gx: Vec<f64> = pts.column(0).to_vec();
        let mut gy: Vec<f64> = pts.column(1).to_vec();
        gx.push(1.0);
        gy.push(1.0);
        let mut worst: f64 = 0.0;
        for &x in &gx {
            for &y in &gy {
                let open = pts.rows().into_iter().filter(|p| p[0] < x && p[1] < y).count();
                let closed = pts.rows().into_iter().filter(|p| p[0] <= x && p[1] <= y).count();
                worst = worst.max(x * y - open as f64 / n);
                worst = worst.max(closed as f64 / n - x * y);
            }
        }
        worst
    }

    #[test]
    fn star_2d_sweep_matches_naive() {
        for seed in 0..5 {
            let p = mc_uniform(40, 2, seed).unwrap();
            let fast = star_discrepancy_bruteforce(&p).unwrap();
            assert!((fast - star_2d_naive(&p.points)).abs() < 1e-15);
        }
        // Repeated coordinates exercise the closed-box tie handling.
        let l = lattice(16, &[1, 5]).unwrap();
        let fast = star_discrepancy_bruteforce(&l).unwrap();
        assert!((fast - star_2d_naive(&l.points)).abs() < 1e-15);
    }

    #[test]
    fn halton_beats_mc_in_star_discrepancy() {
        let h = star_discrepancy_bruteforce(&halton(64, 1, false, 1).unwrap()).unwrap();
        let wins = (0..10)
            .filter(|&seed| {
                let m = star_discrepancy_bruteforce(&mc_uniform(64, 1, seed).unwrap()).unwrap();
                h < m
            })
            .count();
        assert!(wins >= 8, "halton won only {wins} of 10");
    }

    #[test]
    fn halton_star_discrepancy_decays() {
        let small = star_discrepancy_bruteforce(&halton(64, 1, false, 1).unwrap()).unwrap();
        let large = star_discrepancy_bruteforce(&halton(512, 1, false, 1).unwrap()).unwrap();
        assert!(large < small / 4.0, "{large} vs {small}");
    }

    proptest! {
        #[test]
        fn coordinates_stay_inside_clamped_cube(s in 1usize..64, d in 1usize..12, start in 0u64..1000, seed in any::<u64>()) {
            let sets = [
                halton(s, d, false, start).unwrap(),
                halton(s, d, true, start).unwrap(),
                lattice(s, &korobov_vector(s, d, 3)).unwrap(),
                mc_uniform(s, d, seed).unwrap(),
            ];
            for set in &sets {
                prop_assert!(set.points.iter().all(|&x| (CLAMP_EPS..=1.0 - CLAMP_EPS).contains(&x)));
            }
        }

        #[test]
        fn halton_prefix_property(s in 1usize..40, d in 1usize..6, k in 1u64..500, scramble in any::<bool>()) {
            let both = halton(2 * s, d, scramble, k).unwrap();
            let head = halton(s, d, scramble, k).unwrap();
            let tail = halton(s, d, scramble, k + s as u64).unwrap();
            prop_assert_eq!(both.points.slice(ndarray::s![..s, ..]), head.points.view());
            prop_assert_eq!(both.points.slice(ndarray::s![s.., ..]), tail.points.view());
        }
    }
}

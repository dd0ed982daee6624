//! Long-range Jastrow internals.
//!
//! Parameter layout: (a_1..a_N, pair slots). Pair slots list the unshared
//! pairs (minimal-image distance D <= sharing_distance) in lexicographic
//! (j, k) order, followed by one slot per shared distance class
//! D = sharing_distance+1 ..= floor(N/2) in increasing D.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::spin::SpinConfiguration;

/// Maps every unordered site pair to its parameter slot (offset within the
/// pair block, i.e. the full parameter index is N + slot).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharingMap {
    n_sites: usize,
    sharing_distance: usize,
    slot_count: usize,
    /// slot of pair (a, b) at a * n + b, usize::MAX on the diagonal.
    table: Vec<usize>,
}

impl SharingMap {
    pub fn new(n_sites: usize, sharing_distance: usize) -> Self {
        let n = n_sites;
        let mut table = vec![usize::MAX; n * n];
        let mut next = 0;
        for j in 0..n {
            for k in (j + 1)..n {
                let dist = (k - j).min(n - (k - j));
                if dist <= sharing_distance {
                    table[j * n + k] = next;
                    table[k * n + j] = next;
                    next += 1;
                }
            }
        }
        if n >= 2 {
            for dist in (sharing_distance + 1)..=(n / 2) {
                let slot = next;
                next += 1;
                let mut used = false;
                for j in 0..n {
                    for k in (j + 1)..n {
                        if (k - j).min(n - (k - j)) == dist {
                            table[j * n + k] = slot;
                            table[k * n + j] = slot;
                            used = true;
                        }
                    }
                }
                debug_assert!(used, "every distance class 1..=N/2 has pairs");
            }
        }
        Self {
            n_sites,
            sharing_distance,
            slot_count: next,
            table,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn sharing_distance(&self) -> usize {
        self.sharing_distance
    }

    /// Number of pair-parameter slots (excludes the N bias slots).
    pub fn slot_count(&self) -> usize {
        self.slot_count
    }

    /// Slot of the unordered pair (a, b); None iff a == b.
    #[inline]
    pub fn pair_slot(&self, a: usize, b: usize) -> Option<usize> {
        let slot = self.table[a * self.n_sites + b];
        (slot != usize::MAX).then_some(slot)
    }
}

#[inline]
fn eta(map: &SharingMap, params: &DVector<Complex64>, a: usize, b: usize) -> Complex64 {
    match map.pair_slot(a, b) {
        Some(slot) => params[map.n_sites + slot],
        None => Complex64::new(0.0, 0.0),
    }
}

/// Site sums s_f = a_f + sum_{k != f} eta_fk sigma_k.
pub fn site_sums(
    map: &SharingMap,
    params: &DVector<Complex64>,
    x: &SpinConfiguration,
) -> Vec<Complex64> {
    let n = map.n_sites;
    let mut sums: Vec<Complex64> = (0..n).map(|f| params[f]).collect();
    for j in 0..n {
        let sj = x.spin(j);
        for k in (j + 1)..n {
            let e = eta(map, params, j, k);
            let sk = x.spin(k);
            sums[j] += e * sk;
            sums[k] += e * sj;
        }
    }
    sums
}

pub fn log_amplitude(
    map: &SharingMap,
    params: &DVector<Complex64>,
    x: &SpinConfiguration,
) -> Complex64 {
    let n = map.n_sites;
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        acc += x.spin(i) * params[i];
    }
    for j in 0..n {
        for k in (j + 1)..n {
            acc += eta(map, params, j, k) * (x.spin(j) * x.spin(k));
        }
    }
    acc
}

/// log psi = (1/2) sum_f sigma_f (s_f + a_f), recovered from the cache.
pub fn log_amplitude_from_sums(
    params: &DVector<Complex64>,
    x: &SpinConfiguration,
    sums: &[Complex64],
) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (f, &s) in sums.iter().enumerate() {
        acc += 0.5 * x.spin(f) * (s + params[f]);
    }
    acc
}

/// Single flip changes log psi by -2 sigma_f s_f.
#[inline]
pub fn ratio_single(x: &SpinConfiguration, sums: &[Complex64], f: usize) -> Complex64 {
    (-2.0 * x.spin(f) * sums[f]).exp()
}

/// Double flip: Delta_f + Delta_g + 4 eta_fg sigma_f sigma_g (the pair term
/// shared by both sites is invariant under the joint flip; the two
/// single-flip deltas double-count it).
#[inline]
pub fn ratio_double(
    x: &SpinConfiguration,
    sums: &[Complex64],
    eta_fg: Complex64,
    f: usize,
    g: usize,
) -> Complex64 {
    let sf = x.spin(f);
    let sg = x.spin(g);
    (-2.0 * sf * sums[f] - 2.0 * sg * sums[g] + 4.0 * sf * sg * eta_fg).exp()
}

pub fn apply_flip(
    map: &SharingMap,
    params: &DVector<Complex64>,
    x: &SpinConfiguration,
    sums: &mut [Complex64],
    f: usize,
) {
    let sf = x.spin(f);
    for k in 0..map.n_sites {
        if k != f {
            sums[k] -= 2.0 * sf * eta(map, params, k, f);
        }
    }
}

/// O_k(x): sigma_i on bias slots; sum of sigma_j sigma_k over the pairs
/// sharing each pair slot.
pub fn derivative_row(map: &SharingMap, x: &SpinConfiguration, out: &mut [f64]) {
    let n = map.n_sites;
    for i in 0..n {
        out[i] = x.spin(i);
    }
    out[n..].fill(0.0);
    for j in 0..n {
        let sj = x.spin(j);
        for k in (j + 1)..n {
            if let Some(slot) = map.pair_slot(j, k) {
                out[n + slot] += sj * x.spin(k);
            }
        }
    }
}

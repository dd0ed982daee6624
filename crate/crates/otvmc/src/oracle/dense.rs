//! Dense full-Hilbert-space reference: pure-state operator application,
//! Runge-Kutta Lindblad integration, and exact expectation values.
//!
//! Basis convention matches `SpinConfiguration::from_index`: bit a of the
//! index is set iff spin a is up, with site 0 in the least significant
//! bit.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::observables::{wineland_xi2, ObservableRecord};
use crate::spin::SpinConfiguration;

/// Pure states hold 2^N amplitudes.
pub const MAX_PURE_SITES: usize = 12;
/// Density matrices hold 4^N entries.
pub const MAX_DENSITY_SITES: usize = 8;

/// First and raw symmetrized second moments of the normalized collective
/// spin (exact, no statistical errors).
#[derive(Debug, Clone, Copy)]
pub struct SpinMoments {
    pub m: [f64; 3],
    pub g: [[f64; 3]; 3],
}

impl SpinMoments {
    pub fn covariance(&self) -> [[f64; 3]; 3] {
        let mut c = self.g;
        for i in 0..3 {
            for j in 0..3 {
                c[i][j] -= self.m[i] * self.m[j];
            }
        }
        c
    }

    pub fn record(&self, t: f64, n_sites: usize) -> ObservableRecord {
        let c = self.covariance();
        let xi2 = wineland_xi2(&self.m, &c, n_sites).unwrap_or(f64::NAN);
        ObservableRecord {
            t,
            m: self.m,
            m_err: [0.0; 3],
            c,
            c_err: [[0.0; 3]; 3],
            xi2,
            xi2_err: 0.0,
            n_traj: 0,
        }
    }
}

/// Precomputed diagonal and couplings for dense operator application.
pub struct DenseOps {
    n: usize,
    dim: usize,
    diag_ising: Vec<f64>,
    h: f64,
    kappa: f64,
}

impl DenseOps {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        let n = spec.n_sites;
        if n > MAX_PURE_SITES {
            return Err(Error::Capacity(format!(
                "dense pure states limited to N <= {MAX_PURE_SITES}, got {n}"
            )));
        }
        let dim = 1usize << n;
        let table = spec.coupling_table()?;
        let mut diag_ising = Vec::with_capacity(dim);
        for idx in 0..dim {
            let x = SpinConfiguration::from_index(idx, n);
            diag_ising.push(spec.ising_energy(&table, &x));
        }
        Ok(Self {
            n,
            dim,
            diag_ising,
            h: spec.h,
            kappa: spec.kappa,
        })
    }

    pub fn require_density_capacity(&self) -> Result<()> {
        if self.n > MAX_DENSITY_SITES {
            return Err(Error::Capacity(format!(
                "dense density matrices limited to N <= {MAX_DENSITY_SITES}, got {}",
                self.n
            )));
        }
        Ok(())
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// |psi> -> H|psi> with H = sum_{i<j} J_ij sz_i sz_j - h sum_a sx_a.
    pub fn apply_h(&self, psi: &DVector<Complex64>) -> DVector<Complex64> {
        let mut out = DVector::from_element(self.dim, Complex64::default());
        for idx in 0..self.dim {
            out[idx] = self.diag_ising[idx] * psi[idx];
            if self.h != 0.0 {
                for a in 0..self.n {
                    out[idx] -= self.h * psi[idx ^ (1 << a)];
                }
            }
        }
        out
    }

    /// |psi> -> sigma^-_a |psi> (|up> -> |down> at site a).
    pub fn apply_sigma_minus(&self, a: usize, psi: &DVector<Complex64>) -> DVector<Complex64> {
        let mut out = DVector::from_element(self.dim, Complex64::default());
        let bit = 1usize << a;
        for idx in 0..self.dim {
            if idx & bit != 0 {
                out[idx ^ bit] = psi[idx];
            }
        }
        out
    }

    /// Number of up spins in basis state `idx`.
    fn n_up(&self, idx: usize) -> u32 {
        idx.count_ones()
    }

    /// Collective S_i |psi> for i in {x, y, z} (unnormalized by N).
    fn apply_collective(&self, axis: usize, psi: &DVector<Complex64>) -> DVector<Complex64> {
        let mut out = DVector::from_element(self.dim, Complex64::default());
        for idx in 0..self.dim {
            match axis {
                0 => {
                    for a in 0..self.n {
                        out[idx] += psi[idx ^ (1 << a)];
                    }
                }
                1 => {
                    // <x|sy_a|z> = i sigma_a(z) for x = z ^ bit.
                    for a in 0..self.n {
                        let z = idx ^ (1 << a);
                        let sz = if z & (1 << a) != 0 { 1.0 } else { -1.0 };
                        out[idx] += Complex64::new(0.0, sz) * psi[z];
                    }
                }
                _ => {
                    let z = 2.0 * self.n_up(idx) as f64 - self.n as f64;
                    out[idx] = z * psi[idx];
                }
            }
        }
        out
    }

    /// Exact collective-spin moments of a (not necessarily normalized)
    /// pure state.
    pub fn collective_spin(&self, psi: &DVector<Complex64>) -> SpinMoments {
        let norm_sq = psi.norm_squared();
        let nf = self.n as f64;
        let u: Vec<DVector<Complex64>> =
            (0..3).map(|i| self.apply_collective(i, psi)).collect();
        let mut m = [0.0; 3];
        let mut g = [[0.0; 3]; 3];
        for i in 0..3 {
            m[i] = psi.dotc(&u[i]).re / (nf * norm_sq);
            for j in i..3 {
                let val = u[i].dotc(&u[j]).re / (nf * nf * norm_sq);
                g[i][j] = val;
                g[j][i] = val;
            }
        }
        SpinMoments { m, g }
    }

    /// Normalized |+x>^N product state.
    pub fn coherent_plus_x(&self) -> DVector<Complex64> {
        let amp = 1.0 / (self.dim as f64).sqrt();
        DVector::from_element(self.dim, Complex64::new(amp, 0.0))
    }

    /// Amplitudes psi(x) = exp(log psi(x) - max Re log psi), normalized.
    pub fn state_from_ansatz(&self, state: &crate::ansatz::AnsatzState) -> Result<DVector<Complex64>> {
        if state.n_sites() != self.n {
            return Err(Error::Contract(format!(
                "ansatz has {} sites, dense operators {}",
                state.n_sites(),
                self.n
            )));
        }
        let mut logs = Vec::with_capacity(self.dim);
        for idx in 0..self.dim {
            let x = SpinConfiguration::from_index(idx, self.n);
            logs.push(state.log_amplitude(&x)?);
        }
        let max_re = logs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
        let mut psi = DVector::from_iterator(
            self.dim,
            logs.iter().map(|l| (l - Complex64::new(max_re, 0.0)).exp()),
        );
        let norm = psi.norm();
        psi /= Complex64::new(norm, 0.0);
        Ok(psi)
    }

    /// |<a|b>|^2 / (<a|a><b|b>).
    pub fn fidelity(a: &DVector<Complex64>, b: &DVector<Complex64>) -> f64 {
        a.dotc(b).norm_sqr() / (a.norm_squared() * b.norm_squared())
    }

    /// Unitary Schrodinger evolution by RK4 with fixed substeps.
    pub fn schrodinger_evolve(
        &self,
        psi0: &DVector<Complex64>,
        t: f64,
        max_step: f64,
    ) -> DVector<Complex64> {
        let n_sub = ((t / max_step).ceil() as usize).max(1);
        let dt = t / n_sub as f64;
        let mut psi = psi0.clone();
        for _ in 0..n_sub {
            psi = rk4_vec(&psi, dt, |p| {
                let hp = self.apply_h(p);
                hp.map(|c| c * Complex64::new(0.0, -1.0))
            });
        }
        psi
    }

    /// Right-hand side of the Lindblad equation
    /// d rho/dt = -i[H, rho] + kappa sum_a (s-_a rho s+_a - {s+_a s-_a, rho}/2).
    pub fn lindblad_rhs(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let dim = self.dim;
        let mut out = DMatrix::from_element(dim, dim, Complex64::default());
        // -i (H rho - rho H), column- then row-wise application of H.
        for col in 0..dim {
            for row in 0..dim {
                let mut h_rho = self.diag_ising[row] * rho[(row, col)];
                let mut rho_h = self.diag_ising[col] * rho[(row, col)];
                if self.h != 0.0 {
                    for a in 0..self.n {
                        h_rho -= self.h * rho[(row ^ (1 << a), col)];
                        rho_h -= self.h * rho[(row, col ^ (1 << a))];
                    }
                }
                out[(row, col)] = Complex64::new(0.0, -1.0) * (h_rho - rho_h);
            }
        }
        if self.kappa > 0.0 {
            for col in 0..dim {
                for row in 0..dim {
                    let mut diss = Complex64::default();
                    for a in 0..self.n {
                        let bit = 1usize << a;
                        if row & bit == 0 && col & bit == 0 {
                            diss += rho[(row | bit, col | bit)];
                        }
                    }
                    let ups = (self.n_up(row) + self.n_up(col)) as f64;
                    diss -= 0.5 * ups * rho[(row, col)];
                    out[(row, col)] += self.kappa * diss;
                }
            }
        }
        out
    }

    /// Moments from a density matrix: M_i = tr(S_i rho)/N and
    /// G_ij = Re tr(S_i S_j rho)/N^2 (the real part symmetrizes).
    pub fn collective_spin_density(&self, rho: &DMatrix<Complex64>) -> SpinMoments {
        let dim = self.dim;
        let nf = self.n as f64;
        // T_j = S_j rho, built column by column.
        let t_mats: Vec<DMatrix<Complex64>> = (0..3)
            .map(|axis| {
                let mut t = DMatrix::from_element(dim, dim, Complex64::default());
                for col in 0..dim {
                    let column = rho.column(col).clone_owned();
                    let transformed = self.apply_collective(axis, &column);
                    t.set_column(col, &transformed);
                }
                t
            })
            .collect();
        let mut m = [0.0; 3];
        let mut g = [[0.0; 3]; 3];
        for i in 0..3 {
            m[i] = t_mats[i].trace().re / nf;
            for j in 0..3 {
                // tr(S_i T_j) via sparse application of S_i to T_j's columns.
                let mut acc = Complex64::default();
                for col in 0..dim {
                    let column = t_mats[j].column(col).clone_owned();
                    let si_col = self.apply_collective(i, &column);
                    acc += si_col[col];
                }
                g[i][j] = acc.re / (nf * nf);
            }
        }
        // Enforce exact symmetry against roundoff.
        for i in 0..3 {
            for j in (i + 1)..3 {
                let avg = 0.5 * (g[i][j] + g[j][i]);
                g[i][j] = avg;
                g[j][i] = avg;
            }
        }
        SpinMoments { m, g }
    }
}

fn rk4_vec(
    x: &DVector<Complex64>,
    dt: f64,
    f: impl Fn(&DVector<Complex64>) -> DVector<Complex64>,
) -> DVector<Complex64> {
    let k1 = f(x);
    let k2 = f(&(x + k1.map(|c| c * (0.5 * dt))));
    let k3 = f(&(x + k2.map(|c| c * (0.5 * dt))));
    let k4 = f(&(x + k3.map(|c| c * dt)));
    x + (k1 + k2.map(|c| c * 2.0) + k3.map(|c| c * 2.0) + k4).map(|c| c * (dt / 6.0))
}

fn rk4_mat(
    x: &DMatrix<Complex64>,
    dt: f64,
    f: impl Fn(&DMatrix<Complex64>) -> DMatrix<Complex64>,
) -> DMatrix<Complex64> {
    let k1 = f(x);
    let k2 = f(&(x + k1.map(|c| c * (0.5 * dt))));
    let k3 = f(&(x + k2.map(|c| c * (0.5 * dt))));
    let k4 = f(&(x + k3.map(|c| c * dt)));
    x + (k1 + k2.map(|c| c * 2.0) + k3.map(|c| c * 2.0) + k4).map(|c| c * (dt / 6.0))
}

/// Integrates the Lindblad equation from the +x coherent state and
/// records moments on `time_grid` (which must be sorted ascending and
/// start at t >= 0). RK4 with fixed substeps no longer than `max_step`;
/// trace and Hermiticity are checked to 1e-8 at every grid point.
pub fn dense_lindblad_evolve(
    spec: &ModelSpec,
    time_grid: &[f64],
    max_step: f64,
) -> Result<Vec<ObservableRecord>> {
    let ops = DenseOps::new(spec)?;
    ops.require_density_capacity()?;
    let psi0 = ops.coherent_plus_x();
    let dim = ops.dim();
    let mut rho = DMatrix::from_fn(dim, dim, |r, c| psi0[r] * psi0[c].conj());

    let mut records = Vec::with_capacity(time_grid.len());
    let mut t_now = 0.0;
    for &t in time_grid {
        if t < t_now - 1e-12 {
            return Err(Error::Contract(format!(
                "time grid must be ascending, got {t} after {t_now}"
            )));
        }
        let span = t - t_now;
        if span > 1e-15 {
            let n_sub = ((span / max_step).ceil() as usize).max(1);
            let dt = span / n_sub as f64;
            for _ in 0..n_sub {
                rho = rk4_mat(&rho, dt, |r| ops.lindblad_rhs(r));
            }
            t_now = t;
        }
        let trace = rho.trace();
        if (trace - Complex64::new(1.0, 0.0)).norm() > 1e-8 {
            return Err(Error::Contract(format!(
                "trace drifted to {trace} at t = {t}"
            )));
        }
        let mut herm_err = 0.0f64;
        for r in 0..dim {
            for c in r..dim {
                herm_err = herm_err.max((rho[(r, c)] - rho[(c, r)].conj()).norm());
            }
        }
        if herm_err > 1e-8 {
            return Err(Error::Contract(format!(
                "Hermiticity violated by {herm_err} at t = {t}"
            )));
        }
        records.push(ops.collective_spin_density(&rho).record(t, ops.n_sites()));
    }
    Ok(records)
}

//! Shared oracles for integration tests.
#![allow(dead_code)]

/// Brute-force two-decoy bound solver, written independently of the
/// closed-form implementation in `qkd`.
///
/// The photon-number expansion is truncated at 12 terms (the tail mass at
/// the largest intensity is below 1e-13). Yields are bounded by solving
/// the three gain equalities at every vertex of the feasible box: choose
/// three free yields, pin the rest to {0, 1}, solve the 3x3 system, keep
/// feasible solutions and minimize Y1. The error bound then maximizes the
/// single-photon error flux over the remaining one-equality polytope with
/// the adversarial yield vector as capacity.
pub mod decoy_lp {
    use oil_tune_core::qkd::DecoyInputs;

    pub const N: usize = 12;
    const TOL: f64 = 1e-9;

    pub fn poisson_row(k: f64) -> [f64; N] {
        let mut row = [0.0; N];
        let mut term = (-k).exp();
        for (n, slot) in row.iter_mut().enumerate() {
            *slot = term;
            term *= k / (n as f64 + 1.0);
        }
        row
    }

    /// Gaussian elimination with partial pivoting on a 3x3 system.
    fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
        for col in 0..3 {
            let pivot = (col..3).max_by(|&i, &j| {
                a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()
            })?;
            if a[pivot][col].abs() < 1e-300 {
                return None;
            }
            a.swap(col, pivot);
            b.swap(col, pivot);
            for row in (col + 1)..3 {
                let factor = a[row][col] / a[col][col];
                for k in col..3 {
                    a[row][k] -= factor * a[col][k];
                }
                b[row] -= factor * b[col];
            }
        }
        let mut x = [0.0; 3];
        for row in (0..3).rev() {
            let mut sum = b[row];
            for k in (row + 1)..3 {
                sum -= a[row][k] * x[k];
            }
            if a[row][row].abs() < 1e-300 {
                return None;
            }
            x[row] = sum / a[row][row];
        }
        Some(x)
    }

    /// Minimum feasible Y1 together with its yield vector.
    pub fn min_y1(inputs: &DecoyInputs) -> Option<(f64, [f64; N])> {
        let rows =
            [poisson_row(inputs.mu), poisson_row(inputs.nu), poisson_row(inputs.vac)];
        let targets = [inputs.q_mu, inputs.q_nu, inputs.q_vac];
        let mut best: Option<(f64, [f64; N])> = None;

        for i in 0..N {
            for j in (i + 1)..N {
                for k in (j + 1)..N {
                    let free = [i, j, k];
                    let fixed: Vec<usize> =
                        (0..N).filter(|n| !free.contains(n)).collect();
                    let a = [
                        [rows[0][i], rows[0][j], rows[0][k]],
                        [rows[1][i], rows[1][j], rows[1][k]],
                        [rows[2][i], rows[2][j], rows[2][k]],
                    ];
                    for mask in 0u32..(1 << fixed.len()) {
                        let mut b = targets;
                        for (bit, &index) in fixed.iter().enumerate() {
                            if mask & (1 << bit) != 0 {
                                for (row, target) in b.iter_mut().enumerate() {
                                    *target -= rows[row][index];
                                }
                            }
                        }
                        let Some(solution) = solve3(a, b) else { continue };
                        if solution.iter().any(|&y| !(-TOL..=1.0 + TOL).contains(&y)) {
                            continue;
                        }
                        let mut yields = [0.0f64; N];
                        for (bit, &index) in fixed.iter().enumerate() {
                            yields[index] =
                                if mask & (1 << bit) != 0 { 1.0 } else { 0.0 };
                        }
                        for (slot, &index) in free.iter().enumerate() {
                            yields[index] = solution[slot].clamp(0.0, 1.0);
                        }
                        if best.is_none() || yields[1] < best.as_ref().unwrap().0 {
                            best = Some((yields[1], yields));
                        }
                    }
                }
            }
        }
        best
    }

    /// Maximum feasible single-photon error flux b1 = e1 * Y1 given the
    /// decoy error constraint, with b0 pinned to Y0 / 2.
    pub fn max_b1(inputs: &DecoyInputs, yields: &[f64; N]) -> Option<f64> {
        let row = poisson_row(inputs.nu);
        let target = inputs.e_nu * inputs.q_nu;
        let mut best: Option<f64> = None;

        for free in 1..N {
            let fixed: Vec<usize> = (1..N).filter(|&n| n != free).collect();
            for mask in 0u32..(1 << fixed.len()) {
                let mut sum = row[0] * yields[0] / 2.0;
                let mut b1_at_bound = 0.0;
                for (bit, &index) in fixed.iter().enumerate() {
                    let value =
                        if mask & (1 << bit) != 0 { yields[index] } else { 0.0 };
                    sum += row[index] * value;
                    if index == 1 {
                        b1_at_bound = value;
                    }
                }
                if row[free] == 0.0 {
                    continue;
                }
                let solved = (target - sum) / row[free];
                if !(-TOL..=yields[free] + TOL).contains(&solved) {
                    continue;
                }
                let b1 = if free == 1 {
                    solved.clamp(0.0, yields[1])
                } else {
                    b1_at_bound
                };
                if best.is_none() || b1 > best.unwrap() {
                    best = Some(b1);
                }
            }
        }
        best
    }

    /// Full independent rate computation mirroring the published formula
    /// but with LP-derived bounds.
    pub fn rate(inputs: &DecoyInputs) -> f64 {
        let Some((y1, yields)) = min_y1(inputs) else { return 0.0 };
        if y1 <= 0.0 {
            return 0.0;
        }
        let e1 = match max_b1(inputs, &yields) {
            Some(b1) => (b1 / y1).clamp(0.0, 1.0),
            None => 1.0,
        };
        let h2 = |p: f64| oil_tune_core::qkd::binary_entropy(p).unwrap();
        let q1 = y1 * inputs.mu * (-inputs.mu).exp();
        let privacy = if e1 >= 0.5 { 0.0 } else { q1 * (1.0 - h2(e1)) };
        (inputs.q_sift * (-inputs.q_mu * inputs.f_ec * h2(inputs.e_mu) + privacy)).max(0.0)
    }
}

/// Analytic decoy inputs for a channel with per-photon transmission `eta`,
/// detector error `edet` and background click probability `dark` per gate.
pub fn analytic_inputs(eta: f64, edet: f64, dark: f64) -> oil_tune_core::qkd::DecoyInputs {
    use oil_tune_core::qkd::DecoyInputs;
    let yield_n = |n: i32| 1.0 - (1.0 - 2.0 * dark) * (1.0 - eta).powi(n);
    let gain = |k: f64| {
        let mut term = (-k).exp();
        let mut sum = 0.0;
        for n in 0..40 {
            sum += term * yield_n(n);
            term *= k / (n + 1) as f64;
        }
        sum
    };
    let error_gain = |k: f64| {
        let mut term = (-k).exp();
        let mut sum = 0.0;
        for n in 0..40 {
            let signal = 1.0 - (1.0 - eta).powi(n);
            sum += term * (edet * signal + dark * (1.0 - eta).powi(n));
            term *= k / (n + 1) as f64;
        }
        sum
    };
    let base = DecoyInputs::default();
    let (q_mu, q_nu, q_vac) = (gain(base.mu), gain(base.nu), gain(base.vac));
    DecoyInputs {
        q_mu,
        q_nu,
        q_vac,
        e_mu: error_gain(base.mu) / q_mu,
        e_nu: error_gain(base.nu) / q_nu,
        ..base
    }
}

//! Matrix exponential by scaling and squaring with diagonal Padé
//! approximants (orders 3, 5, 7, 9, 13).

use crate::error::{Error, Result};
use crate::state::{check_square_finite, CMatrix, C64};

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152;

const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE_9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn one_norm(a: &CMatrix) -> f64 {
    a.columns()
        .into_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Returns `(U, V)` for the low-order approximants, where
/// `U = A * sum_odd b_k A^(k-1)` and `V = sum_even b_k A^k`.
fn pade_low(a: &CMatrix, coeffs: &[f64]) -> (CMatrix, CMatrix) {
    let n = a.nrows();
    let a2 = a.dot(a);
    let mut powers = vec![CMatrix::eye(n)];
    for _ in 1..=(coeffs.len() / 2) {
        let next = powers.last().unwrap().dot(&a2);
        powers.push(next);
    }
    let mut u_inner = CMatrix::zeros((n, n));
    let mut v = CMatrix::zeros((n, n));
    for (k, &b) in coeffs.iter().enumerate() {
        let p = &powers[k / 2];
        if k % 2 == 0 {
            v.scaled_add(real(b), p);
        } else {
            u_inner.scaled_add(real(b), p);
        }
    }
    (a.dot(&u_inner), v)
}

fn pade_13(a: &CMatrix) -> (CMatrix, CMatrix) {
    let n = a.nrows();
    let b = PADE_13;
    let id = CMatrix::eye(n);
    let a2 = a.dot(a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);

    let mut u_hi = a6.mapv(|z| z * b[13]);
    u_hi.scaled_add(real(b[11]), &a4);
    u_hi.scaled_add(real(b[9]), &a2);
    let mut u_inner = a6.dot(&u_hi);
    u_inner.scaled_add(real(b[7]), &a6);
    u_inner.scaled_add(real(b[5]), &a4);
    u_inner.scaled_add(real(b[3]), &a2);
    u_inner.scaled_add(real(b[1]), &id);
    let u = a.dot(&u_inner);

    let mut v_hi = a6.mapv(|z| z * b[12]);
    v_hi.scaled_add(real(b[10]), &a4);
    v_hi.scaled_add(real(b[8]), &a2);
    let mut v = a6.dot(&v_hi);
    v.scaled_add(real(b[6]), &a6);
    v.scaled_add(real(b[4]), &a4);
    v.scaled_add(real(b[2]), &a2);
    v.scaled_add(real(b[0]), &id);
    (u, v)
}

/// Solves `lhs * X = rhs` by LU decomposition with partial pivoting.
fn solve(mut lhs: CMatrix, mut rhs: CMatrix) -> CMatrix {
    let n = lhs.nrows();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| lhs[[i, col]].norm().total_cmp(&lhs[[j, col]].norm()))
            .unwrap();
        if pivot != col {
            for k in 0..n {
                lhs.swap([col, k], [pivot, k]);
                rhs.swap([col, k], [pivot, k]);
            }
        }
        let inv = lhs[[col, col]].inv();
        for row in (col + 1)..n {
            let factor = lhs[[row, col]] * inv;
            if factor.norm_sqr() == 0.0 {
                continue;
            }
            for k in col..n {
                let t = lhs[[col, k]];
                lhs[[row, k]] -= factor * t;
            }
            for k in 0..n {
                let t = rhs[[col, k]];
                rhs[[row, k]] -= factor * t;
            }
        }
    }
    for col in (0..n).rev() {
        let inv = lhs[[col, col]].inv();
        for k in 0..n {
            let mut acc = rhs[[col, k]];
            for j in (col + 1)..n {
                acc -= lhs[[col, j]] * rhs[[j, k]];
            }
            rhs[[col, k]] = acc * inv;
        }
    }
    rhs
}

/// `exp(m)` for a square matrix with finite entries.
pub fn matrix_exp(m: &CMatrix) -> Result<CMatrix> {
    let n = check_square_finite(m)?;
    if n == 0 {
        return Ok(CMatrix::zeros((0, 0)));
    }
    let norm = one_norm(m);
    if !norm.is_finite() {
        return Err(Error::NonFinite);
    }

    for (order, theta) in THETA {
        if norm <= theta {
            let coeffs: &[f64] = match order {
                3 => &PADE_3,
                5 => &PADE_5,
                7 => &PADE_7,
                _ => &PADE_9,
            };
            let (u, v) = pade_low(m, coeffs);
            return Ok(solve(&v - &u, &v + &u));
        }
    }

    let squarings = (norm / THETA_13).log2().ceil().max(0.0) as i32;
    let scaled = m.mapv(|z| z / 2f64.powi(squarings));
    let (u, v) = pade_13(&scaled);
    let mut out = solve(&v - &u, &v + &u);
    for _ in 0..squarings {
        out = out.dot(&out);
    }
    Ok(out)
}

/// Propagator `exp(-i H t)`.
pub fn unitary_propagator(hamiltonian: &CMatrix, t: f64) -> Result<CMatrix> {
    matrix_exp(&hamiltonian.mapv(|z| z * C64::new(0.0, -t)))
}

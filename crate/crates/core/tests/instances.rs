//! Tabulated instance constants against sampling, and reference points
//! against brute-force grids.

use conmm_core::problems::INSTANCE_NAMES;
use conmm_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(u, v)| u - v).collect()
}

fn joined(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().chain(b).copied().collect()
}

/// Uniform point of the centred cube of the given half-width.
fn sample(rng: &mut ChaCha8Rng, dim: usize, half_width: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-half_width..=half_width)).collect()
}

#[test]
fn sampled_constants_are_valid() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for name in INSTANCE_NAMES {
        let inst = registry(name).unwrap();
        let p = &inst.problem;
        let k = &p.constants;
        let (n, m) = (p.dims.n, p.dims.m);
        let rx = k.d_x.unwrap() / (2.0 * (n as f64).sqrt());
        let ry = k.d_y.unwrap() / (2.0 * (m as f64).sqrt());
        let slack = 1.0 + 1e-9;
        for _ in 0..2000 {
            let (xa, ya) = (sample(&mut rng, n, rx), sample(&mut rng, m, ry));
            let (xb, yb) = (sample(&mut rng, n, rx), sample(&mut rng, m, ry));
            let step = norm(&diff(&joined(&xa, &ya), &joined(&xb, &yb)));
            let step_x = norm(&diff(&xa, &xb));

            let (fa, fb) = (p.model.f(&xa, &ya), p.model.f(&xb, &yb));
            assert!((fa - fb).abs() <= k.l_f.unwrap() * step * slack, "{name}: L_F");
            assert!(fa <= k.f_hi.unwrap() * slack + 1e-12, "{name}: F_hi");
            assert!(fa >= k.f_low.unwrap() - 1e-12, "{name}: F_low");

            let (gxa, gya) = p.model.grad_f(&xa, &ya);
            let (gxb, gyb) = p.model.grad_f(&xb, &yb);
            let dg = norm(&diff(&joined(&gxa, &gya), &joined(&gxb, &gyb)));
            assert!(dg <= k.l_grad_f.unwrap() * step * slack, "{name}: L_grad_f");

            if p.dims.n_c > 0 {
                let (ca, cb) = (p.model.c(&xa), p.model.c(&xb));
                assert!(norm(&diff(&ca, &cb)) <= k.l_c.unwrap() * step_x * slack, "{name}: L_c");
                assert!(norm(&ca) <= k.c_hi.unwrap() * slack, "{name}: c_hi");
                // Rows of ∇c from the transposed product with unit vectors.
                let ja = p.model.jac_c_t_apply(&xa, &[1.0]);
                let jb = p.model.jac_c_t_apply(&xb, &[1.0]);
                assert!(norm(&diff(&ja, &jb)) <= k.l_grad_c.unwrap() * step_x * slack, "{name}: L_grad_c");
            }
            if p.dims.n_d > 0 {
                let (da, db) = (p.model.d(&xa, &ya), p.model.d(&xb, &yb));
                assert!(norm(&diff(&da, &db)) <= k.l_d.unwrap() * step * slack, "{name}: L_d");
                assert!(norm(&da) <= k.d_hi.unwrap() * slack, "{name}: d_hi");
            }
        }
    }
}

#[test]
fn quadratic_saddles_match_first_order_conditions() {
    for name in ["quad_saddle_1d", "quad_saddle_box"] {
        let inst = registry(name).unwrap();
        let r = &inst.references[0];
        let (gx, gy) = inst.problem.model.grad_f(&r.x, &r.y);
        assert!(norm(&gx) == 0.0 && norm(&gy) == 0.0, "{name}");
        // Saddle inequalities along random directions.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = inst.problem.dims.n;
        let h0 = inst.problem.model.f(&r.x, &r.y);
        for _ in 0..200 {
            let dx = sample(&mut rng, n, 1.0);
            let dy = sample(&mut rng, n, 1.0);
            assert!(inst.problem.model.f(&dx, &r.y) >= h0);
            assert!(inst.problem.model.f(&r.x, &dy) <= h0);
        }
    }
}

/// `min_{x² ≤ 1, |x| ≤ 2} max_{x + y ≤ 1, |y| ≤ 2} f(x, y)` by nested grids.
fn constrained_toy_grid(model: &dyn SmoothModel) -> (f64, f64, f64) {
    let nx = 4001;
    let ny = 4001;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..nx {
        let x = -1.0 + 2.0 * i as f64 / (nx - 1) as f64;
        let y_hi = (1.0 - x).min(2.0);
        let mut inner = (f64::NEG_INFINITY, 0.0);
        for j in 0..ny {
            let y = -2.0 + (y_hi + 2.0) * j as f64 / (ny - 1) as f64;
            let v = model.f(&[x], &[y]);
            if v > inner.0 {
                inner = (v, y);
            }
        }
        if inner.0 < best.0 {
            best = (inner.0, x, inner.1);
        }
    }
    best
}

#[test]
fn constrained_toy_reference_matches_grid() {
    let inst = registry("constrained_toy").unwrap();
    let (value, x, y) = constrained_toy_grid(inst.problem.model.as_ref());
    let r = &inst.references[0];
    assert!((x - r.x[0]).abs() <= 1e-3 && (y - r.y[0]).abs() <= 2e-3, "grid ({x}, {y})");
    assert!(value.abs() <= 1e-6, "{value}");
    assert!(inst.problem.constants.f_star_low.unwrap() <= value);
    let res = kkt_residuals(&inst.problem, &r.x, &r.y, &r.lambda_x, &r.lambda_y).unwrap();
    assert!(res.max() <= 1e-12, "{res:?}");
}

#[test]
fn ncc_toy_minimax_value_matches_grid() {
    let inst = registry("ncc_toy").unwrap();
    let data = inst.ncc.unwrap();
    let m = inst.problem.model.as_ref();
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..4001 {
        let x = -1.0 + 2.0 * i as f64 / 4000.0;
        let mut inner = f64::NEG_INFINITY;
        for j in 0..401 {
            let y = -1.0 + 2.0 * j as f64 / 400.0;
            inner = inner.max(m.f(&[x], &[y]));
        }
        assert!((inner - (data.max_y)(&[x])).abs() <= 1e-12);
        if inner < best.0 {
            best = (inner, x);
        }
    }
    assert_eq!(best.1, -1.0);
    assert!((best.0 - data.h_star).abs() <= 1e-12);
    assert!(data.h_low <= best.0);
}

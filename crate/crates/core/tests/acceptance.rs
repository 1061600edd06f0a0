//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAIL` are reported as FAIL but do not fail the
//! target; the run fails if any other criterion fails or if a listed one
//! starts passing.

use std::collections::HashMap;
use std::process::ExitCode;
use std::time::Instant;

use lodlab_core::coefficient::Raster;
use lodlab_core::fem::{element_matrix, solve_reference, Form};
use lodlab_core::linalg::dot;
use lodlab_core::lod::{linear_fit, SparseVec};
use lodlab_core::quasi_interp::{build_operator, eta_1d, interior_prolongation, mu_min_1d};
use lodlab_core::*;
use nalgebra::{DMatrix, DVector};

const N_FINE: usize = 128;
const N_EPS: usize = 32;
const KNOWN_FAIL: &[usize] = &[3, 9];

type Check = Result<(bool, String), Error>;

/// Reference solutions and LOD errors on the blocks coefficient, shared
/// between criteria.
#[derive(Default)]
struct Blocks {
    errors: HashMap<(usize, u64, OperatorKind, Option<usize>, Localization), f64>,
}

impl Blocks {
    fn error(
        &mut self,
        nc: usize,
        beta: f64,
        kind: OperatorKind,
        order: Option<usize>,
        loc: Localization,
    ) -> Result<f64, Error> {
        let key = (nc, beta.to_bits(), kind, order, loc);
        if let Some(&e) = self.errors.get(&key) {
            return Ok(e);
        }
        let h = build_hierarchy(nc, N_EPS.max(nc), N_FINE)?;
        let c = ElementCoefficient::from_raster(&make_blocks(beta)?, &h);
        let reference = solve_reference(&h, c.fine(), &Source::HalfStep)?;
        let op = build_operator(kind, &h, &c)?;
        let lod = LodProblem::new(&h, &c, &op)?;
        let basis = lod.basis(order, loc)?;
        let sol = lod.solve_coarse(&basis, &reference.load)?;
        let e = relative_energy_error(&reference.u, &sol.lifted, lod.stiffness())?;
        self.errors.insert(key, e);
        Ok(e)
    }
}

fn sci(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", items.join(", "))
}

fn tied(nc: usize) -> Option<usize> {
    KPolicy::Tied.resolve(nc, 1.0)
}

fn order_of(ns: &[usize], errs: &[f64]) -> f64 {
    let x: Vec<f64> = ns.iter().map(|&n| (1.0 / n as f64).ln()).collect();
    let y: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    linear_fit(&x, &y).0
}

fn convergence(b: &mut Blocks) -> Check {
    let ns = [4, 8, 16, 32];
    let mut pass = true;
    let mut detail = Vec::new();
    for beta in [1.0, 1e3, 1e6] {
        let mut errs = Vec::new();
        for &n in &ns {
            let e = b.error(n, beta, OperatorKind::AwProj, tied(n), Localization::Nodal)?;
            pass &= e <= 2.0 / n as f64;
            errs.push(e);
        }
        let rate = order_of(&ns, &errs);
        pass &= rate >= 1.0;
        detail.push(format!("beta={beta:e} errs={} order={rate:.2}", sci(&errs)));
    }
    Ok((pass, detail.join("; ")))
}

fn contrast_robustness(b: &mut Blocks) -> Check {
    let errs = [1.0, 1e3, 1e6]
        .iter()
        .map(|&beta| b.error(16, beta, OperatorKind::AwProj, tied(16), Localization::Nodal))
        .collect::<Result<Vec<_>, _>>()?;
    let max = errs.iter().cloned().fold(f64::MIN, f64::max);
    let min = errs.iter().cloned().fold(f64::MAX, f64::min);
    Ok((max / min <= 3.0, format!("errs={} ratio={:.3}", sci(&errs), max / min)))
}

fn weighted_small_k(b: &mut Blocks) -> Check {
    let aw = b.error(16, 1e6, OperatorKind::AwProj, Some(2), Localization::Nodal)?;
    let cl = b.error(16, 1e6, OperatorKind::Clement, Some(2), Localization::Nodal)?;
    let aw_el = b.error(16, 1e6, OperatorKind::AwProj, Some(2), Localization::Element)?;
    let cl_el = b.error(16, 1e6, OperatorKind::Clement, Some(2), Localization::Element)?;
    Ok((
        aw <= 0.5 * cl,
        format!(
            "aw-proj={aw:.4e} clement={cl:.4e} ratio={:.3} (element localization: ratio={:.3})",
            aw / cl,
            aw_el / cl_el
        ),
    ))
}

fn corrector_decay() -> Check {
    let h = build_hierarchy(8, N_EPS, N_FINE)?;
    let c = ElementCoefficient::from_raster(&make_blocks(1e6)?, &h);
    let op = build_operator(OperatorKind::AwProj, &h, &c)?;
    let lod = LodProblem::new(&h, &c, &op)?;
    // (1/8, 2/8) touches the lower left corner of the inclusion
    let z = h.coarse().vertex_index(1, 2);
    let mut sat = 1;
    while h.nodal_patch(z, sat)?.coarse_triangles.len() < h.coarse().num_triangles() {
        sat += 1;
    }
    let ks: Vec<usize> = (1..=5).chain([sat]).collect();
    let prof = lod.decay_profile(z, &ks)?;
    let tails: Vec<f64> = prof.tails[..5].iter().map(|&(_, t)| (t / prof.total_energy).sqrt()).collect();
    let decreasing = tails.windows(2).all(|w| w[1] < w[0]);
    let x: Vec<f64> = (1..=5).map(|k| k as f64).collect();
    let y: Vec<f64> = tails.iter().map(|t| t.ln()).collect();
    let (slope, r2) = linear_fit(&x, &y);
    let at_sat = prof.tails[5].1 / prof.total_energy;
    Ok((
        decreasing && slope <= -0.5 && r2 >= 0.9 && at_sat <= 1e-8,
        format!("relative tails={} slope={slope:.3} r2={r2:.4} saturation k={sat} tail={at_sat:.1e}", sci(&tails)),
    ))
}

fn localization_consistency() -> Check {
    let h = build_hierarchy(4, N_EPS, N_FINE)?;
    let c = ElementCoefficient::from_raster(&make_blocks(1e6)?, &h);
    let reference = solve_reference(&h, c.fine(), &Source::HalfStep)?;
    let sat = h.saturation_order();
    let mut worst: f64 = 0.0;
    for kind in OperatorKind::ALL {
        let op = build_operator(kind, &h, &c)?;
        let lod = LodProblem::new(&h, &c, &op)?;
        let global = lod.solve_coarse(&lod.basis(None, Localization::Nodal)?, &reference.load)?;
        for (k, loc) in [(sat, Localization::Nodal), (sat + 1, Localization::Element)] {
            let local = lod.solve_coarse(&lod.basis(Some(k), loc)?, &reference.load)?;
            worst = worst.max(relative_energy_error(&global.lifted, &local.lifted, lod.stiffness())?);
        }
    }
    Ok((worst <= 1e-8, format!("worst relative difference={worst:.2e} at k={sat}")))
}

fn identities() -> Check {
    let mut proj: f64 = 0.0;
    for nc in [4, 8] {
        let h = build_hierarchy(nc, N_EPS, N_FINE)?;
        let c = ElementCoefficient::from_raster(&make_blocks(1e6)?, &h);
        for kind in [OperatorKind::Proj, OperatorKind::AwProj] {
            let r = build_operator(kind, &h, &c)?.coarse_restriction(&h).to_dense();
            let id = DMatrix::<f64>::identity(r.nrows(), r.ncols());
            proj = proj.max((r - id).abs().max());
        }
    }
    let h = build_hierarchy(4, N_EPS, N_FINE)?;
    let c = ElementCoefficient::constant(&h, 7.0);
    let mut degen: f64 = 0.0;
    for kind in OperatorKind::ALL.into_iter().filter(|k| k.is_weighted()) {
        let w = build_operator(kind, &h, &c)?.matrix().to_dense();
        let u = build_operator(kind.unweighted(), &h, &c)?.matrix().to_dense();
        degen = degen.max((w - u).abs().max());
    }
    Ok((proj <= 1e-12 && degen <= 1e-12, format!("|I_H P - I|={proj:.1e} |weighted - unweighted|={degen:.1e}")))
}

fn orthogonality() -> Check {
    let h = build_hierarchy(8, N_EPS, N_FINE)?;
    let c = ElementCoefficient::from_raster(&make_blocks(1e6)?, &h);
    let reference = solve_reference(&h, c.fine(), &Source::HalfStep)?;
    let op = build_operator(OperatorKind::AwProj, &h, &c)?;
    let lod = LodProblem::new(&h, &c, &op)?;
    let basis = lod.basis(None, Localization::Nodal)?;
    let sol = lod.solve_coarse(&basis, &reference.load)?;
    let k = lod.stiffness();
    let diff: Vec<f64> = reference.u.iter().zip(&sol.lifted).map(|(a, b)| a - b).collect();
    let kd = k.mul_vec(&diff);
    let mut worst: f64 = 0.0;
    for psi in &basis.psi {
        let dense = psi.to_dense(lod.fine_dofs().len());
        let norm = dot(&dense, &k.mul_vec(&dense)).sqrt();
        worst = worst.max(dot(&kd, &dense).abs() / (reference.energy * norm));
    }
    Ok((worst <= 1e-8, format!("max scaled residual={worst:.2e} over {} nodes", basis.psi.len())))
}

fn eta_construction() -> Check {
    let b1 = eta_1d(0.5, 0.125, 1e8)?.b1;
    let b1_err = (b1 + 20.0 / 7.0).abs();
    let dev = eta_1d(0.5, 0.125, 1e8)?.nodal_deviation.iter().cloned().fold(0.0, f64::max);
    let mut scaled = Vec::new();
    let mut growth = Vec::new();
    for y in [0.3, 0.5, 0.7] {
        let b16 = eta_1d(y, 1.0 / 16.0, 1e8)?.bound_expression;
        let b32 = eta_1d(y, 1.0 / 32.0, 1e8)?.bound_expression;
        scaled.push(b16 / 16f64.powi(4));
        scaled.push(b32 / 32f64.powi(4));
        growth.push(b32 / b16);
    }
    // halving ε may grow the bound by at most 2⁴
    let pass = b1_err <= 1e-12 && dev <= 1e-4 && growth.iter().all(|&g| g <= 16.0 * 1.05);
    Ok((pass, format!("|b1 + 20/7|={b1_err:.1e} deviation={dev:.1e} bound*eps^4={scaled:.3?} growth={growth:.2?}")))
}

fn spectral_equivalence() -> Check {
    let (y, eps) = (0.5, 1.0 / 16.0);
    let target = eps * eps / (6.0 * y * y * (1.0 - y) * (1.0 - y));
    let m6 = mu_min_1d(y, eps, 1e6)?;
    let m4 = mu_min_1d(y, eps, 1e4)?;
    let m8 = mu_min_1d(y, eps, 1e8)?;
    let rel_target = (m6 - target).abs() / target;
    let spread = (m4 - m8).abs() / m4.min(m8);
    Ok((
        rel_target <= 0.1 && spread <= 0.05,
        format!(
            "mu(1e6)={m6:.5e} vs {target:.5e} ({:.1}%); mu(1e4)={m4:.5e} mu(1e8)={m8:.5e} spread={:.1}%",
            100.0 * rel_target,
            100.0 * spread
        ),
    ))
}

fn quasi_monotone() -> Check {
    let h = build_hierarchy(4, N_EPS, N_FINE)?;
    let nt = h.coarse().num_triangles();
    let blocks = |beta| make_blocks(beta).map(|r| ElementCoefficient::from_raster(&r, &h));
    let (low, high) = (blocks(1.0)?, blocks(1e6)?);
    let inclusion: Vec<usize> =
        (0..h.eps_level().num_triangles()).filter(|&e| high.eps()[e] > 1.0).map(|e| h.eps_to_coarse(e)).collect();
    let mut pass = true;
    let mut ratios = Vec::new();
    for t in 0..nt {
        let patch = h.element_neighborhood(t)?;
        let mask = patch.mask(nt);
        if !inclusion.iter().all(|&ct| mask[ct]) {
            continue;
        }
        let kind = classify_quasi_monotone(&high, &h, t, 1.0)?.kind;
        let a = estimate_poincare(&low, &h, &patch, PoincareVariant::Mean)?.c_p;
        let b = estimate_poincare(&high, &h, &patch, PoincareVariant::Mean)?.c_p;
        let ratio = a.max(b) / a.min(b);
        pass &= kind == QuasiMonoType::Type1 && ratio <= 2.0;
        ratios.push(ratio);
    }
    pass &= !ratios.is_empty();

    // two high cells inside ω_T separated by low cells
    let t = h.coarse().triangle_index(1, 1, false);
    let patch = h.element_neighborhood(t)?;
    let pattern = |beta: f64| -> Result<ElementCoefficient, Error> {
        let mut r = Raster::constant(N_EPS, N_EPS, 1.0);
        r.values[4 * N_EPS + 11] = beta;
        r.values[11 * N_EPS + 4] = beta;
        Ok(ElementCoefficient::from_raster(&RasterCoefficient::new(r)?, &h))
    };
    let bad = classify_quasi_monotone(&pattern(1e6)?, &h, t, 1.0)?.kind;
    let a = estimate_poincare(&pattern(1.0)?, &h, &patch, PoincareVariant::Mean)?.c_p;
    let b = estimate_poincare(&pattern(1e6)?, &h, &patch, PoincareVariant::Mean)?.c_p;
    pass &= bad == QuasiMonoType::None && b >= 1e3 * a;
    Ok((
        pass,
        format!(
            "inclusion patches={} C_P ratios={ratios:.3?}; separated pattern: {bad}, C_P growth={:.2e}",
            ratios.len(),
            b / a
        ),
    ))
}

fn trivial_contrast() -> Check {
    let ns = [4, 8, 16];
    let source = Source::Raster(Raster::constant(1, 1, 1.0));
    let (mut lod_errs, mut fem_errs) = (Vec::new(), Vec::new());
    for &nc in &ns {
        let h = build_hierarchy(nc, N_EPS, N_FINE)?;
        let c = ElementCoefficient::constant(&h, 1.0);
        let reference = solve_reference(&h, c.fine(), &source)?;
        let op = build_operator(OperatorKind::Clement, &h, &c)?;
        let lod = LodProblem::new(&h, &c, &op)?;
        let sol = lod.solve_coarse(&lod.basis(Some(h.saturation_order()), Localization::Nodal)?, &reference.load)?;
        lod_errs.push(relative_energy_error(&reference.u, &sol.lifted, lod.stiffness())?);

        // plain P1 Galerkin on the coarse mesh through the prolongation
        let p = interior_prolongation(&h).to_dense();
        let k = reference.stiffness.to_dense();
        let a = p.transpose() * &k * &p;
        let f = p.transpose() * DVector::from_vec(reference.load.clone());
        let uh = a.cholesky().expect("coarse stiffness is SPD").solve(&f);
        let lifted = (&p * uh).as_slice().to_vec();
        fem_errs.push(relative_energy_error(&reference.u, &lifted, &reference.stiffness)?);
    }
    let rate = order_of(&ns, &lod_errs);
    let within = lod_errs.iter().zip(&fem_errs).all(|(l, f)| *l <= *f);
    Ok((rate >= 1.0 && within, format!("lod={} coarse P1={} order={rate:.2}", sci(&lod_errs), sci(&fem_errs))))
}

/// Dense oracle: minimize `½ xᵀKx − fᵀx` over patch functions with `C x = 0`
/// in an orthonormal basis of the kernel of `C` on the patch.
fn dense_corrector(k: &DMatrix<f64>, c: &DMatrix<f64>, f: &DVector<f64>, free: &[usize]) -> DVector<f64> {
    let n = free.len();
    let mut x = DVector::zeros(k.nrows());
    if n == 0 {
        return x;
    }
    let cp = DMatrix::from_fn(c.nrows().max(1), n, |r, a| if r < c.nrows() { c[(r, free[a])] } else { 0.0 });
    // right singular vectors of the zero singular values span the kernel
    let padded = DMatrix::from_fn(n.max(cp.nrows()), n, |r, a| if r < cp.nrows() { cp[(r, a)] } else { 0.0 });
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("right singular vectors");
    let smax = svd.singular_values.max();
    let basis: Vec<usize> = (0..n).filter(|&i| svd.singular_values[i] <= 1e-12 * smax.max(1e-300)).collect();
    if basis.is_empty() {
        return x;
    }
    let nb = DMatrix::from_fn(n, basis.len(), |a, b| vt[(basis[b], a)]);
    let kp = DMatrix::from_fn(n, n, |a, b| k[(free[a], free[b])]);
    let fp = DVector::from_fn(n, |a, _| f[free[a]]);
    let reduced = nb.transpose() * &kp * &nb;
    let y = reduced.cholesky().expect("reduced stiffness is SPD").solve(&(nb.transpose() * fp));
    let xp = nb * y;
    for (a, &i) in free.iter().enumerate() {
        x[i] = xp[a];
    }
    x
}

fn dense_oracles() -> Check {
    let h = build_hierarchy(2, 4, 8)?;
    let c = ElementCoefficient::from_raster(&make_blocks(1e6)?, &h);
    let fine = h.fine();
    let nt = h.coarse().num_triangles();
    let dofs = DofMap::interior(fine);
    let n = dofs.len();
    let mut kd = DMatrix::zeros(n, n);
    for t in 0..fine.num_triangles() {
        let e = element_matrix(fine, t, Form::Stiffness);
        let tri = fine.triangle(t);
        for a in 0..3 {
            for b in 0..3 {
                let (i, j) = (dofs.dof(tri[a]), dofs.dof(tri[b]));
                if i < n && j < n {
                    kd[(i, j)] += c.fine()[t] * e[a][b];
                }
            }
        }
    }
    // b restricted to the fine children of `on`, applied to the prolonged hat of y
    let rhs = |y: usize, on: &[usize]| {
        let mut f = DVector::zeros(n);
        for &ct in on {
            for &t in h.children(ct) {
                let e = element_matrix(fine, t, Form::Stiffness);
                let tri = fine.triangle(t);
                let lam: Vec<f64> = tri.iter().map(|&v| h.prolongation().get(v, y)).collect();
                for a in 0..3 {
                    let i = dofs.dof(tri[a]);
                    if i < n {
                        f[i] += c.fine()[t] * (0..3).map(|b| e[a][b] * lam[b]).sum::<f64>();
                    }
                }
            }
        }
        f
    };
    let free_in = |mask: &[bool]| -> Vec<usize> {
        (0..fine.num_vertices())
            .filter(|&v| !fine.is_boundary(v) && fine.vertex_triangles(v).iter().all(|&t| mask[h.parent(t)]))
            .map(|v| dofs.dof(v))
            .collect()
    };
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let mut compare = |got: &SparseVec, want: &DVector<f64>| {
        let got = got.to_dense(n);
        let scale = want.amax().max(1e-300);
        let diff = got.iter().zip(want.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(diff / scale);
        count += 1;
    };
    for kind in OperatorKind::ALL {
        let op = build_operator(kind, &h, &c)?;
        let cd = op.matrix().to_dense();
        let lod = LodProblem::new(&h, &c, &op)?;
        for z in h.coarse().interior_vertices() {
            let star = h.coarse().vertex_triangles(z);
            let all = vec![true; nt];
            compare(&lod.corrector_global(z)?.values, &dense_corrector(&kd, &cd, &rhs(z, star), &free_in(&all)));
            for k in 1..=2 {
                let mask = h.nodal_patch(z, k)?.mask(nt);
                compare(&lod.corrector_local(z, k)?.values, &dense_corrector(&kd, &cd, &rhs(z, star), &free_in(&mask)));
                for &t in star {
                    let mask = h.element_patch(t, k)?.mask(nt);
                    let want = dense_corrector(&kd, &cd, &rhs(z, &[t]), &free_in(&mask));
                    compare(&lod.twostep_element(t, z, k)?.values, &want);
                }
            }
        }
    }
    Ok((worst <= 1e-8, format!("{count} solves, worst relative deviation={worst:.2e}")))
}

fn main() -> ExitCode {
    let mut blocks = Blocks::default();
    let criteria: Vec<(usize, &str, Box<dyn FnOnce(&mut Blocks) -> Check>)> = vec![
        (1, "convergence under H", Box::new(convergence)),
        (2, "contrast robustness", Box::new(contrast_robustness)),
        (3, "weighted operators at small k", Box::new(weighted_small_k)),
        (4, "corrector decay", Box::new(|_| corrector_decay())),
        (5, "localization consistency", Box::new(|_| localization_consistency())),
        (6, "projection and degeneracy identities", Box::new(|_| identities())),
        (7, "Galerkin orthogonality", Box::new(|_| orthogonality())),
        (8, "1D eta construction", Box::new(|_| eta_construction())),
        (9, "1D spectral equivalence", Box::new(|_| spectral_equivalence())),
        (10, "quasi-monotonicity and C_P", Box::new(|_| quasi_monotone())),
        (11, "trivial contrast sanity", Box::new(|_| trivial_contrast())),
        (12, "dense oracle equivalence", Box::new(|_| dense_oracles())),
    ];
    let mut unexpected = Vec::new();
    for (id, name, check) in criteria {
        let start = Instant::now();
        let (pass, detail) = match check(&mut blocks) {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let tag = if pass { "PASS" } else { "FAIL" };
        let note = if !pass && KNOWN_FAIL.contains(&id) { " [known]" } else { "" };
        println!("{tag} {id:>2} {name}{note}: {detail} ({:.1}s)", start.elapsed().as_secs_f64());
        if pass == KNOWN_FAIL.contains(&id) {
            unexpected.push(id);
        }
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected outcome for criteria {unexpected:?}");
        ExitCode::FAILURE
    }
}

use cwsoc_core::ldp::{cramer_transform, eval_f, log_laplace, log_laplace_gradient, Region};
use cwsoc_core::limit::{LimitLaw, LimitMode};
use cwsoc_core::linalg::rank_one_inv_update;
use cwsoc_core::soc::hamiltonian;
use cwsoc_core::{MeasureSpec, SymMat};
use proptest::prelude::*;

fn spd(dim: usize) -> impl Strategy<Value = SymMat> {
    prop::collection::vec(-1.0..1.0f64, dim * dim).prop_map(move |a| {
        let mut m = SymMat::scalar(dim, 0.5);
        for i in 0..dim {
            let row = &a[i * dim..(i + 1) * dim];
            m.add_outer(row, 1.0);
        }
        m
    })
}

fn sym(dim: usize, scale: f64) -> impl Strategy<Value = SymMat> {
    prop::collection::vec(-scale..scale, dim * dim)
        .prop_map(move |a| SymMat::from_row_major_symmetrized(dim, &a))
}

fn discrete_2d() -> MeasureSpec {
    MeasureSpec::discrete(vec![
        (vec![1.0, 0.5], 0.2),
        (vec![-1.0, -0.5], 0.2),
        (vec![0.0, 1.0], 0.15),
        (vec![0.0, -1.0], 0.15),
        (vec![0.7, -0.7], 0.15),
        (vec![-0.7, 0.7], 0.15),
    ])
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn sherman_morrison_matches_direct_inverse(m in spd(3), v in prop::collection::vec(-1.0..1.0f64, 3)) {
        let inv = m.inv_spd().unwrap();
        let fast = rank_one_inv_update(&inv, &v, 1.0).unwrap();
        let mut plus = m.clone();
        plus.add_outer(&v, 1.0);
        let direct = plus.inv_spd().unwrap();
        prop_assert!(fast.sub(&direct).max_abs() < 1e-9 * direct.max_abs().max(1.0));
    }

    #[test]
    fn eigen_reconstructs(m in sym(4, 3.0)) {
        let e = m.eigen();
        let back = e.map(|l| l);
        prop_assert!(back.sub(&m).max_abs() < 1e-10 * m.max_abs().max(1.0));
        prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn inverse_square_root_whitens(m in spd(3)) {
        let r = m.inv_sqrt_spd().unwrap();
        let w = m.congruence(&r);
        prop_assert!(w.sub(&SymMat::identity(3)).max_abs() < 1e-9);
    }

    #[test]
    fn hamiltonian_stays_in_range(pts in prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 2), 2..12)) {
        if let Some(h) = hamiltonian(&pts) {
            prop_assert!(h >= -1e-12);
            prop_assert!(h <= pts.len() as f64 / 2.0 + 1e-9 * pts.len() as f64);
        }
    }

    #[test]
    fn f_is_bounded_on_delta(m in spd(2), dir in prop::collection::vec(-1.0..1.0f64, 2), t in 0.0..1.0f64) {
        // Scale x so that ⟨M⁻¹x, x⟩ = t ≤ 1, which puts (x, M) in Δ*.
        let q = m.inv_spd().unwrap().quad_form(&dir);
        prop_assume!(q > 1e-6);
        let x: Vec<f64> = dir.iter().map(|v| v * (t / q).sqrt() * (1.0 - 1e-9)).collect();
        let (f, region) = eval_f(&x, &m).unwrap();
        prop_assert_eq!(region, Region::DeltaStar);
        prop_assert!((0.0..=0.5).contains(&f));
        prop_assert!((f - t / 2.0).abs() < 1e-8);
    }

    #[test]
    fn laplace_is_midpoint_convex(
        u1 in prop::collection::vec(-2.0..2.0f64, 2), a1 in sym(2, 1.0),
        u2 in prop::collection::vec(-2.0..2.0f64, 2), a2 in sym(2, 1.0),
    ) {
        let spec = discrete_2d();
        let l1 = log_laplace(&spec, &u1, &a1).unwrap();
        let l2 = log_laplace(&spec, &u2, &a2).unwrap();
        let um: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| 0.5 * (a + b)).collect();
        let am = a1.add(&a2).scaled(0.5);
        let lm = log_laplace(&spec, &um, &am).unwrap();
        prop_assert!(lm <= 0.5 * (l1 + l2) + 1e-10);
    }

    #[test]
    fn laplace_gradient_matches_finite_differences(u in prop::collection::vec(-1.5..1.5f64, 2), a in sym(2, 0.8)) {
        let spec = discrete_2d();
        let g = log_laplace_gradient(&spec, &u, &a).unwrap();
        let h = 1e-5;
        for i in 0..2 {
            let mut up = u.clone();
            up[i] += h;
            let mut dn = u.clone();
            dn[i] -= h;
            let fd = (log_laplace(&spec, &up, &a).unwrap() - log_laplace(&spec, &dn, &a).unwrap()) / (2.0 * h);
            prop_assert!((fd - g.mean[i]).abs() <= 1e-6 * g.mean[i].abs().max(1.0));
        }
        for i in 0..2 {
            for j in i..2 {
                let mut e = SymMat::zeros(2);
                e.set(i, j, 1.0);
                let fd = (log_laplace(&spec, &u, &a.axpy(h, &e)).unwrap()
                    - log_laplace(&spec, &u, &a.axpy(-h, &e)).unwrap()) / (2.0 * h);
                let analytic = g.second.frobenius_dot(&e);
                prop_assert!((fd - analytic).abs() <= 1e-6 * analytic.abs().max(1.0));
            }
        }
    }

    #[test]
    fn fenchel_inequality(
        w in prop::collection::vec(0.01..1.0f64, 6),
        u in prop::collection::vec(-3.0..3.0f64, 2), a in sym(2, 2.0),
    ) {
        // (x, M) as a mixture of atoms lies in the domain of I.
        let spec = discrete_2d();
        let atoms = spec.atoms().unwrap();
        let total: f64 = w.iter().sum();
        let mut x = vec![0.0; 2];
        let mut m = SymMat::zeros(2);
        for (atom, wi) in atoms.iter().zip(&w) {
            let p = wi / total;
            x[0] += p * atom.point[0];
            x[1] += p * atom.point[1];
            m.add_outer(&atom.point, p);
        }
        let i = cramer_transform(&spec, &x, &m).unwrap();
        let lam = log_laplace(&spec, &u, &a).unwrap();
        let lhs = i.value + lam;
        let rhs = x[0] * u[0] + x[1] * u[1] + m.frobenius_dot(&a);
        prop_assert!(lhs >= rhs - 1e-8, "{lhs} < {rhs}");
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let j = cramer_transform(&spec, &neg, &m).unwrap();
        prop_assert!((i.value - j.value).abs() < 1e-8);
    }

    #[test]
    fn limit_density_is_even(z in prop::collection::vec(-4.0..4.0f64, 2)) {
        let law = LimitLaw::from_spec(&discrete_2d(), LimitMode::Whitened).unwrap();
        let neg: Vec<f64> = z.iter().map(|v| -v).collect();
        prop_assert_eq!(law.density(&z), law.density(&neg));
    }
}

mod common;

use common::{c, complex_vec, random_state, random_unitary, C};
use mzx::hilbert::{
    apply, embed, inner, kron, projector, LinearMap, SpaceSpec, StateVector, SubsystemSpec,
};
use proptest::prelude::*;

fn sub(name: &str, dim: usize) -> SubsystemSpec {
    SubsystemSpec::new(name, (0..dim).map(|i| format!("{name}{i}"))).unwrap()
}

fn space(subs: &[(&str, usize)]) -> SpaceSpec {
    SpaceSpec::new(subs.iter().map(|(n, d)| sub(n, *d)).collect()).unwrap()
}

/// `(A⊗B)[(i·dB+k),(j·dB+l)] = A[i,j]·B[k,l]` by direct enumeration.
fn kron_oracle(a: &[C], da: usize, b: &[C], db: usize) -> Vec<C> {
    let d = da * db;
    let mut out = vec![c(0.0, 0.0); d * d];
    for i in 0..da {
        for j in 0..da {
            for k in 0..db {
                for l in 0..db {
                    out[(i * db + k) * d + (j * db + l)] = a[i * da + j] * b[k * db + l];
                }
            }
        }
    }
    out
}

/// Acts with `op` on the middle factor of a `2 ⊗ 3 ⊗ 2` space, column by column.
fn embed_middle_oracle(op: &[C]) -> Vec<C> {
    let d = 12;
    let mut out = vec![c(0.0, 0.0); d * d];
    for left in 0..2 {
        for mid in 0..3 {
            for right in 0..2 {
                let col = (left * 3 + mid) * 2 + right;
                for r in 0..3 {
                    let row = (left * 3 + r) * 2 + right;
                    out[row * d + col] = op[r * 3 + mid];
                }
            }
        }
    }
    out
}

fn max_diff(a: &[C], b: &[C]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn kron_matches_index_oracle(a in complex_vec(4), b in complex_vec(9)) {
        let ma = LinearMap::new(SpaceSpec::single(sub("a", 2)), a.clone()).unwrap();
        let mb = LinearMap::new(SpaceSpec::single(sub("b", 3)), b.clone()).unwrap();
        let k = kron(&ma, &mb).unwrap();
        let expected = kron_oracle(&a, 2, &b, 3);
        prop_assert_eq!(k.entries(), expected.as_slice());
        prop_assert!(!k.is_unitary());
    }

    #[test]
    fn embed_middle_matches_oracle(op in complex_vec(9)) {
        let full = space(&[("a", 2), ("b", 3), ("c", 2)]);
        let m = LinearMap::new(SpaceSpec::single(sub("b", 3)), op.clone()).unwrap();
        let e = embed(&m, &["b"], &full).unwrap();
        prop_assert!(max_diff(e.entries(), &embed_middle_oracle(&op)) == 0.0);
    }

    #[test]
    fn embed_reordered_targets(op in complex_vec(16)) {
        // an operator on (c, a) embedded into a ⊗ b ⊗ c equals the swap-conjugated operator on (a, c)
        let full = space(&[("a", 2), ("b", 3), ("c", 2)]);
        let ca = SpaceSpec::new(vec![sub("c", 2), sub("a", 2)]).unwrap();
        let ac = SpaceSpec::new(vec![sub("a", 2), sub("c", 2)]).unwrap();
        let m = LinearMap::new(ca, op.clone()).unwrap();
        let swapped: Vec<C> = (0..16)
            .map(|k| {
                let (r, col) = (k / 4, k % 4);
                let sw = |i: usize| (i % 2) * 2 + i / 2;
                op[sw(r) * 4 + sw(col)]
            })
            .collect();
        let m2 = LinearMap::new(ac, swapped).unwrap();
        let e1 = embed(&m, &["c", "a"], &full).unwrap();
        let e2 = embed(&m2, &["a", "c"], &full).unwrap();
        prop_assert!(e1.max_abs_diff(&e2).unwrap() == 0.0);
    }

    #[test]
    fn embeds_on_disjoint_targets_commute(u in random_unitary(2), v in random_unitary(3)) {
        let full = space(&[("a", 2), ("b", 3), ("c", 2)]);
        let mu = LinearMap::unitary(SpaceSpec::single(sub("c", 2)), u).unwrap();
        let mv = LinearMap::unitary(SpaceSpec::single(sub("b", 3)), v).unwrap();
        let eu = embed(&mu, &["c"], &full).unwrap();
        let ev = embed(&mv, &["b"], &full).unwrap();
        let uv = eu.compose(&ev).unwrap();
        let vu = ev.compose(&eu).unwrap();
        prop_assert!(uv.max_abs_diff(&vu).unwrap() <= 1e-12);
    }

    #[test]
    fn inner_is_conjugate_symmetric(a in complex_vec(6), b in complex_vec(6)) {
        let s = space(&[("a", 2), ("b", 3)]);
        let va = StateVector::unnormalized(s.clone(), a).unwrap();
        let vb = StateVector::unnormalized(s, b).unwrap();
        let d = inner(&va, &vb).unwrap() - inner(&vb, &va).unwrap().conj();
        prop_assert!(d.norm() <= 1e-15);
    }

    #[test]
    fn random_unitaries_pass_construction_check(u in random_unitary(4)) {
        let m = LinearMap::unitary(space(&[("a", 2), ("c", 2)]), u).unwrap();
        prop_assert!(m.unitarity_deviation() <= 1e-10);
        prop_assert!(m.dagger().is_unitary());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn unitary_apply_preserves_norm(u in random_unitary(6), psi in random_state(6)) {
        let s = space(&[("a", 2), ("b", 3)]);
        let m = LinearMap::unitary(s.clone(), u).unwrap();
        let v = StateVector::new(s, psi).unwrap();
        let out = apply(&m, &v).unwrap();
        prop_assert!((out.norm() - 1.0).abs() <= 1e-10);
        prop_assert!(out.is_normalized());
    }
}

#[test]
fn projector_completeness_over_every_subsystem() {
    let s = space(&[("a", 2), ("b", 3), ("c", 2)]);
    for subsystem in s.subsystems() {
        let mut sum = LinearMap::new(s.clone(), vec![c(0.0, 0.0); 144]).unwrap();
        for label in subsystem.labels() {
            sum = sum.add(&projector(&s, subsystem.name(), label).unwrap()).unwrap();
        }
        assert!(sum.entries().iter().all(|z| z.im == 0.0 && (z.re == 0.0 || z.re == 1.0)));
        assert_eq!(sum.max_abs_diff(&LinearMap::identity(s.clone())).unwrap(), 0.0);
    }
}

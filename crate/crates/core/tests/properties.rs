use msdcanet::data::{add_gaussian_noise, add_poisson_noise, random_rotation, rotate, Sample};
use msdcanet::metrics::{asd, confusion, f1, foreground_iou, miou, paired_t_test, precision, sensitivity, Mask, Stars};
use msdcanet::Tensor;
use proptest::prelude::*;

fn mask(max: usize) -> impl Strategy<Value = Mask> {
    (1..=max, 1..=max)
        .prop_flat_map(|(h, w)| proptest::collection::vec(any::<bool>(), h * w).prop_map(move |d| Mask::new(h, w, d).unwrap()))
}

fn pair(max: usize) -> impl Strategy<Value = (Mask, Mask)> {
    (1..=max, 1..=max).prop_flat_map(|(h, w)| {
        let m = move || proptest::collection::vec(any::<bool>(), h * w).prop_map(move |d| Mask::new(h, w, d).unwrap());
        (m(), m())
    })
}

fn scores(p: &Mask, g: &Mask) -> [f64; 4] {
    let cm = confusion(p, g).unwrap();
    [f1(&cm), miou(&cm), sensitivity(&cm), precision(&cm)]
}

proptest! {
    #[test]
    fn metrics_transpose_invariant((p, g) in pair(12)) {
        prop_assert_eq!(scores(&p, &g), scores(&p.transpose(), &g.transpose()));
        if !p.is_empty() && !g.is_empty() {
            let (a, b) = (asd(&p, &g).unwrap(), asd(&p.transpose(), &g.transpose()).unwrap());
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dice_dominates_jaccard((p, g) in pair(12)) {
        let cm = confusion(&p, &g).unwrap();
        let (d, j) = (f1(&cm), foreground_iou(&cm));
        prop_assert!(d >= j - 1e-15, "dice {} < jaccard {}", d, j);
        prop_assert!((0.0..=1.0).contains(&d) && (0.0..=1.0).contains(&miou(&cm)));
    }

    #[test]
    fn swap_roles((p, g) in pair(12)) {
        let (a, b) = (confusion(&p, &g).unwrap(), confusion(&g, &p).unwrap());
        prop_assert_eq!(precision(&a), sensitivity(&b));
        prop_assert!((f1(&a) - f1(&b)).abs() < 1e-15);
        prop_assert_eq!(miou(&a), miou(&b));
        if !p.is_empty() && !g.is_empty() {
            prop_assert_eq!(asd(&p, &g).unwrap(), asd(&g, &p).unwrap());
        }
    }

    #[test]
    fn perfect_prediction(m in mask(12)) {
        prop_assert_eq!(scores(&m, &m), [1.0; 4]);
        if !m.is_empty() {
            prop_assert_eq!(asd(&m, &m).unwrap(), 0.0);
        }
    }

    #[test]
    fn t_test_affine_and_sign(
        x in proptest::collection::vec(-1.0f64..1.0, 3..20),
        k in 0.1f64..10.0,
        c in -5.0f64..5.0,
    ) {
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v * 0.5 + (i as f64 * 0.37).sin()).collect();
        let base = paired_t_test(&x, &y).unwrap();
        let tx: Vec<f64> = x.iter().map(|v| k * v + c).collect();
        let ty: Vec<f64> = y.iter().map(|v| k * v + c).collect();
        let moved = paired_t_test(&tx, &ty).unwrap();
        prop_assert!((base.t - moved.t).abs() <= 1e-8 * base.t.abs().max(1.0));
        prop_assert!((base.p - moved.p).abs() <= 1e-9);
        let flipped = paired_t_test(&y, &x).unwrap();
        prop_assert_eq!(flipped.t, -base.t);
        prop_assert_eq!(flipped.p, base.p);
        prop_assert!((0.0..=1.0).contains(&base.p));
        prop_assert_eq!(base.grade, Stars::from_p(base.p));
    }

    #[test]
    fn augmentation_keeps_pairs(m in mask(10), seed in any::<u64>(), deg in 1.0f64..180.0) {
        // the image is the mask itself, so any misregistration shows up
        let (h, w) = (m.height(), m.width());
        let s = Sample::new("x", m.to_tensor(), m.clone(), None).unwrap();
        let r = random_rotation(&s, deg, seed).unwrap();
        prop_assert_eq!(&r.id, &s.id);
        prop_assert_eq!((r.height(), r.width(), r.channels()), (h, w, 1));
        for turn in [90.0f64, 180.0, 270.0, -90.0] {
            if turn.rem_euclid(180.0) != 0.0 && h != w {
                continue;
            }
            let q = rotate(&s, turn).unwrap();
            let from_image = Mask::new(h, w, q.image.data().iter().map(|&v| v > 0.5).collect()).unwrap();
            prop_assert_eq!(&from_image, &q.mask);
            prop_assert_eq!(q.mask.count(), m.count());
        }
    }

    #[test]
    fn noise_leaves_range_and_shape(m in mask(10), seed in any::<u64>(), var in 0.0f64..0.5) {
        let img = m.to_tensor::<f32>();
        for out in [add_gaussian_noise(&img, var, seed).unwrap(), add_poisson_noise(&img, 30.0, seed).unwrap()] {
            prop_assert_eq!(out.shape(), img.shape());
            prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        prop_assert_eq!(add_gaussian_noise(&img, var, seed).unwrap(), add_gaussian_noise(&img, var, seed).unwrap());
    }
}

#[test]
fn zero_variance_noise_is_identity() {
    let img = Tensor::<f32>::from_vec(&[1, 2, 2], vec![0.1, 0.5, 0.9, 1.0]).unwrap();
    assert_eq!(add_gaussian_noise(&img, 0.0, 3).unwrap(), img);
}

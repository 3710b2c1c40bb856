mod common;

use std::collections::BTreeSet;

use common::{rng, toy_objective_with, uniform};
use latentvid::losses::{
    collapse_pyramid, lap1_loss, laplacian_pyramid, reconstruction_loss, sample_triplets, static_loss, total_loss,
    triplet_graph, triplet_loss, valid_anchors, LossBreakdown, LossConfig, TripletIndices,
};
use latentvid::{Graph, Tensor, VideoClip};
use proptest::prelude::*;

fn frame(seed: u64) -> Tensor {
    uniform::<f32>(&mut rng(seed), &[3, 16, 16]).map(|v| v + 0.5)
}

fn clip(frames: &[Tensor]) -> VideoClip {
    VideoClip::from_frames(frames).unwrap()
}

#[test]
fn constant_image_has_flat_residuals() {
    let x = Tensor::full(&[2, 16, 16], 0.3f32);
    let bands = laplacian_pyramid(&x, 3).unwrap();
    assert_eq!(bands.len(), 3);
    assert_eq!(bands[2].shape(), [2, 4, 4]);
    for b in &bands[..2] {
        assert!(b.data().iter().all(|v| v.abs() < 1e-6));
    }
    assert!(bands[2].data().iter().all(|v| (v - 0.3).abs() < 1e-6));
}

#[test]
fn single_level_is_identity() {
    let x = frame(1);
    assert_eq!(laplacian_pyramid(&x, 1).unwrap(), vec![x]);
}

#[test]
fn collapse_inverts_pyramid() {
    for seed in 0..10 {
        let x = frame(seed);
        let back = collapse_pyramid(&laplacian_pyramid(&x, 3).unwrap()).unwrap();
        assert!(x.max_abs_diff(&back) <= 1e-5);
    }
}

#[test]
fn indivisible_extent_rejected() {
    let x = Tensor::zeros(&[1, 10, 10]);
    assert!(laplacian_pyramid::<f32>(&x, 3).is_err());
    assert!(laplacian_pyramid::<f32>(&x, 2).is_ok());
}

#[test]
fn lap1_constant_pair() {
    let a = Tensor::full(&[3, 16, 16], 0.2f32);
    let b = Tensor::full(&[3, 16, 16], 0.7f32);
    let v = lap1_loss(&a, &b, 2).unwrap();
    assert!((v - 16.0 * 0.5).abs() < 1e-5, "{v}");
}

#[test]
fn lap1_rejects_shape_mismatch() {
    assert!(lap1_loss(&Tensor::<f32>::zeros(&[1, 8, 8]), &Tensor::zeros(&[1, 8, 16]), 2).is_err());
}

proptest! {
    #[test]
    fn lap1_is_a_pseudometric(s1 in any::<u64>(), s2 in any::<u64>()) {
        let (x, y) = (frame(s1), frame(s2));
        let xy = lap1_loss(&x, &y, 3).unwrap();
        prop_assert!(xy >= 0.0);
        prop_assert_eq!(xy, lap1_loss(&y, &x, 3).unwrap());
        prop_assert_eq!(lap1_loss(&x, &x, 3).unwrap(), 0.0);
    }

    #[test]
    fn sampled_triples_respect_window(frames in 6usize..20, w in 1usize..3, seed in any::<u64>()) {
        let t = sample_triplets(frames, w, 16, seed).unwrap();
        prop_assert_eq!(t.len(), 16);
        prop_assert!(t.is_valid(frames, w));
        for &(a, p, n) in &t.triples {
            prop_assert!(a != p && a.abs_diff(p) <= w && a.abs_diff(n) > w);
        }
    }
}

#[test]
fn reconstruction_examples() {
    let (a, b) = (frame(1), frame(2));
    let v = clip(&[a.clone(), b.clone()]);
    assert_eq!(reconstruction_loss(&v, &v, 3).unwrap(), 0.0);

    let single = reconstruction_loss(&clip(std::slice::from_ref(&a)), &clip(std::slice::from_ref(&b)), 3).unwrap();
    assert!((single - lap1_loss(&a, &b, 3).unwrap()).abs() < 1e-9);

    let c = frame(3);
    let v_hat = clip(&[c.clone(), b.clone()]);
    let half = reconstruction_loss(&v, &v_hat, 3).unwrap();
    assert!((half - 0.5 * lap1_loss(&a, &c, 3).unwrap()).abs() < 1e-6);

    assert!(reconstruction_loss(&v, &clip(&[a]), 3).is_err());
}

#[test]
fn static_loss_selects_one_frame() {
    let (a, b, c) = (frame(4), frame(5), frame(6));
    let v = clip(&[a.clone(), b.clone(), c.clone()]);
    let v_hat = clip(&[a.clone(), frame(7), c.clone()]);
    assert_eq!(
        static_loss(&v, &v_hat, 1, 3).unwrap_or(f64::NAN).to_bits(),
        0f64.to_bits()
    );
    let k2 = static_loss(&v, &v_hat, 2, 3).unwrap();
    assert!(k2 > 0.0);
    assert!((k2 - lap1_loss(&b, &frame(7), 3).unwrap()).abs() < 1e-9);
    assert!(static_loss(&v, &v_hat, 0, 3).is_err());
    assert!(static_loss(&v, &v_hat, 4, 3).is_err());
}

#[test]
fn valid_anchor_enumeration() {
    for (frames, w) in [(5usize, 2usize), (8, 2), (16, 2), (6, 1), (7, 3)] {
        let mut expected = BTreeSet::new();
        for a in 1..=frames {
            for p in 1..=frames {
                for n in 1..=frames {
                    if p != a && a.abs_diff(p) <= w && a.abs_diff(n) > w {
                        expected.insert(a);
                    }
                }
            }
        }
        let got: BTreeSet<usize> = valid_anchors(frames, w).into_iter().collect();
        assert_eq!(got, expected, "L={frames}, w={w}");
    }
    assert_eq!(valid_anchors(5, 2), vec![1, 2, 4, 5]);

    let drawn: BTreeSet<usize> = sample_triplets(5, 2, 200, 9)
        .unwrap()
        .triples
        .iter()
        .map(|t| t.0)
        .collect();
    assert_eq!(drawn, [1, 2, 4, 5].into_iter().collect());
}

#[test]
fn triplet_sampling_is_seeded_and_checked() {
    assert_eq!(
        sample_triplets(16, 2, 8, 3).unwrap(),
        sample_triplets(16, 2, 8, 3).unwrap()
    );
    assert!(sample_triplets(3, 2, 4, 0).is_err());
    assert!(sample_triplets(8, 2, 0, 0).is_err());
}

fn rows(data: &[[f32; 2]]) -> Tensor {
    Tensor::new(&[data.len(), 2], data.iter().flatten().copied().collect()).unwrap()
}

fn one(a: usize, p: usize, n: usize) -> TripletIndices {
    TripletIndices {
        triples: vec![(a, p, n)],
    }
}

#[test]
fn triplet_examples() {
    let same = rows(&[[0.4, 0.1], [0.4, 0.1], [0.4, 0.1]]);
    assert!((triplet_loss(&same, &one(1, 2, 3), 2.0).unwrap() - 2.0).abs() < 1e-9);

    let boundary = rows(&[[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]]);
    assert_eq!(triplet_loss(&boundary, &one(1, 2, 3), 2.0).unwrap(), 0.0);

    let spread = rows(&[[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]]);
    assert_eq!(triplet_loss(&spread, &one(1, 2, 3), 2.0).unwrap(), 0.0);

    let active = rows(&[[0.0, 0.0], [1.0, 0.0], [1.5, 0.0]]);
    let two = TripletIndices {
        triples: vec![(1, 2, 3), (1, 2, 3)],
    };
    assert!((triplet_loss(&active, &two, 2.0).unwrap() - (1.0 + 2.0 - 2.25)).abs() < 1e-6);
}

#[test]
fn inactive_hinge_gives_no_negative_gradient() {
    let z = Tensor::<f64>::new(&[3, 2], vec![0.0, 0.0, 0.5, 0.0, 3.0, 0.0]).unwrap();
    let triples = one(1, 2, 3);
    let mut g = Graph::<f64>::new();
    let zv = g.param("z", z.clone()).unwrap();
    let loss = triplet_graph(&mut g, zv, &triples, 2.0).unwrap();
    let grad = g.gradient_all(loss).unwrap().by_name("z").unwrap().clone();
    assert_eq!(grad.row(2), &[0.0, 0.0]);

    let h = 1e-3;
    for col in 0..2 {
        let mut up = z.clone();
        up.row_mut(2)[col] += h;
        let mut down = z.clone();
        down.row_mut(2)[col] -= h;
        let fd = (triplet_loss(&up, &triples, 2.0).unwrap() - triplet_loss(&down, &triples, 2.0).unwrap()) / (2.0 * h);
        assert_eq!(fd, 0.0);
    }
}

#[test]
fn total_loss_combines_terms() {
    let cfg = LossConfig {
        lambda_static: 0.01,
        lambda_triplet: 0.01,
        ..LossConfig::default()
    };
    let b = LossBreakdown::combine(0.5, 0.2, 1.0, &cfg);
    assert!((b.total - 0.512).abs() < 1e-12);

    let v = clip(&[frame(1), frame(2), frame(3), frame(4), frame(5)]);
    let v_hat = clip(&[frame(6), frame(7), frame(8), frame(9), frame(10)]);
    let z = uniform::<f32>(&mut rng(1), &[5, 3]);
    let triples = sample_triplets(5, 2, 4, 1).unwrap();
    let off = LossConfig {
        lambda_static: 0.0,
        lambda_triplet: 0.0,
        ..cfg.clone()
    };
    let plain = total_loss(&v, &v_hat, &z, 2, &triples, &off).unwrap();
    assert!((plain.total - reconstruction_loss(&v, &v_hat, 3).unwrap()).abs() < 1e-6);

    let far = rows(&[[0.0, 0.0], [0.1, 0.0], [9.0, 0.0], [9.0, 0.0], [9.0, 0.0]]);
    let far_triples = TripletIndices {
        triples: vec![(1, 2, 4), (2, 1, 5)],
    };
    let perfect = total_loss(&v, &v, &far, 3, &far_triples, &cfg).unwrap();
    assert_eq!(perfect.total, 0.0);
}

#[test]
fn triplet_weight_does_not_reach_generator_or_static_code() {
    let grads = |lambda_triplet: f64| {
        let loss = LossConfig {
            lambda_static: 0.3,
            lambda_triplet,
            ..LossConfig::default()
        };
        let toy = toy_objective_with::<f64>(8, 5, 4, loss);
        let mut g = Graph::new();
        let vars: Vec<_> = toy
            .inputs
            .iter()
            .map(|(n, t)| g.param(n.as_str(), t.clone()).unwrap())
            .collect();
        let total = (toy.build)(&mut g, &vars).unwrap();
        g.gradient_all(total).unwrap()
    };
    let (with, without) = (grads(0.7), grads(0.0));
    let mut compared = 0;
    for (id, t) in with.iter() {
        let name = id.as_str();
        if name.starts_with("gen.") || name == "z_s" {
            assert_eq!(t, without.get(id).unwrap(), "{name}");
            compared += 1;
        }
    }
    assert!(compared > 2);
    assert_ne!(with.by_name("z_t"), without.by_name("z_t"));
}

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vlrl_core::nets::{
    distance_latent, distance_projection, ema_update, Branch, LatentTransition, Linear, Mlp, Module, NetSizes,
    ProjectionHeads, Representation, ResidualDynamics,
};
use vlrl_core::tensor::{Tape, Tensor, TensorError};

/// Single linear layer `[z, a] W` with `W = [wz; wa]`.
fn linear_dynamics(wz: &[f64], wa: &[f64], dz: usize, da: usize) -> ResidualDynamics<f64> {
    let mut w = wz.to_vec();
    w.extend_from_slice(wa);
    let layer = Linear {
        weight: Tensor::new(vec![dz + da, dz], w).unwrap(),
        bias: Tensor::zeros(&[dz]),
    };
    ResidualDynamics::from_net(Mlp::from_layers(vec![layer]).unwrap(), dz, da).unwrap()
}

fn identity(n: usize, scale: f64) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = scale;
    }
    m
}

fn step(dm: &ResidualDynamics<f64>, z: &[f64], a: &[f64]) -> Vec<f64> {
    let zt = Tensor::matrix(1, z.len(), z.to_vec()).unwrap();
    let at = Tensor::matrix(1, a.len(), a.to_vec()).unwrap();
    dm.infer(&zt, &at).unwrap().into_data()
}

#[test]
fn zero_encoder_gives_zero_latent() {
    let enc = Mlp::<f64>::zeros(&[4, 8, 3]);
    let out = enc.infer(&Tensor::vector(vec![1.0, -2.0, 3.0, 0.5])).unwrap();
    assert_eq!(out.data(), &[0.0; 3]);
}

#[test]
fn target_branch_backward_is_contract_error() {
    let rep = Representation::<f64>::new(3, 2, &NetSizes::default(), 0);
    let mut tape = Tape::new();
    let bound = rep.bind(&mut tape);
    let obs = tape.constant(Tensor::matrix(1, 3, vec![0.1, 0.2, 0.3]).unwrap());
    let z = bound.encode(&mut tape, obs, Branch::Target).unwrap();
    let s = tape.sum(z);
    assert!(matches!(tape.backward(s), Err(TensorError::Contract(_))));
}

#[test]
fn online_branch_reaches_encoder_weights() {
    let rep = Representation::<f64>::new(3, 2, &NetSizes::default(), 0);
    let mut tape = Tape::new();
    let bound = rep.bind(&mut tape);
    let obs = tape.constant(Tensor::matrix(1, 3, vec![0.1, 0.2, 0.3]).unwrap());
    let z = bound.encode(&mut tape, obs, Branch::Online).unwrap();
    let s = tape.sum(z);
    let g = tape.backward(s).unwrap();
    assert!(bound.encoder.vars().iter().all(|&v| g.get(v).is_some()));
    assert!(bound.target_encoder.vars().iter().all(|&v| g.get(v).is_none()));
}

#[test]
fn dynamics_test_doubles() {
    let zero = linear_dynamics(&[0.0; 4], &[0.0; 2], 2, 1);
    assert_eq!(step(&zero, &[0.3, -0.7], &[1.0]), vec![0.3, -0.7]);

    let double = linear_dynamics(&identity(2, 1.0), &[0.0; 2], 2, 1);
    assert_eq!(step(&double, &[0.3, -0.7], &[1.0]), vec![0.6, -1.4]);
}

#[test]
fn linear_inverse_pair_round_trips() {
    let b = [0.5, -1.5, 2.0, 0.25];
    let neg: Vec<f64> = b.iter().map(|v| -v).collect();
    let h = linear_dynamics(&[0.0; 4], &b, 2, 2);
    let back = linear_dynamics(&[0.0; 4], &neg, 2, 2);
    let z = [0.4, -1.1];
    let a = [1.0, 0.5];
    let next = step(&h, &z, &a);
    let expected = [z[0] + a[0] * b[0] + a[1] * b[2], z[1] + a[0] * b[1] + a[1] * b[3]];
    assert!((next[0] - expected[0]).abs() < 1e-15 && (next[1] - expected[1]).abs() < 1e-15);
    let prev = step(&back, &next, &a);
    assert!((prev[0] - z[0]).abs() < 1e-15 && (prev[1] - z[1]).abs() < 1e-15);
}

#[test]
fn residual_dynamics_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dm = ResidualDynamics::<f64>::new(1, 1, &mut rng);
    assert_eq!(dm.net().sizes(), vec![2, 2, 2, 1]);
    let (z, a) = (0.8, -0.6);
    let mut h = vec![z, a];
    let layers = dm.net().layers();
    for (i, l) in layers.iter().enumerate() {
        let (rows, cols) = (l.input_dim(), l.output_dim());
        let mut out = l.bias.data().to_vec();
        for c in 0..cols {
            for r in 0..rows {
                out[c] += h[r] * l.weight.data()[r * cols + c];
            }
        }
        if i + 1 < layers.len() {
            out.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        h = out;
    }
    let got = step(&dm, &[z], &[a]);
    assert!((got[0] - (z + h[0])).abs() < 1e-14);
}

#[test]
fn dynamics_rejects_wrong_shapes() {
    let dm = linear_dynamics(&[0.0; 4], &[0.0; 2], 2, 1);
    let mut tape = Tape::<f64>::new();
    let bound = dm.bind(&mut tape, false);
    let z = tape.constant(Tensor::matrix(1, 3, vec![0.0; 3]).unwrap());
    let a = tape.constant(Tensor::matrix(1, 1, vec![0.0]).unwrap());
    assert!(matches!(
        bound.step(&mut tape, z, a),
        Err(TensorError::Dimension { .. })
    ));
}

#[test]
fn ema_examples() {
    let online = Tensor::vector(vec![1.0, 2.0]);
    let mut target = Tensor::vector(vec![3.0, -2.0]);
    ema_update(&[&online], &mut [&mut target], 1.0).unwrap();
    assert_eq!(target.data(), &[3.0, -2.0]);
    ema_update(&[&online], &mut [&mut target], 0.0).unwrap();
    assert_eq!(target.data(), &[1.0, 2.0]);

    let online = Tensor::vector(vec![1.0f64]);
    let mut target = Tensor::vector(vec![0.0]);
    ema_update(&[&online], &mut [&mut target], 0.99).unwrap();
    assert!((target.data()[0] - 0.01).abs() < 1e-15);

    assert!(ema_update(&[&online], &mut [&mut target], 1.5).is_err());
}

#[test]
fn representation_update_targets_follows_encoder() {
    let sizes = NetSizes {
        latent_dim: 4,
        projection_dim: 3,
        encoder_hidden: vec![5],
        head_hidden: 8,
    };
    let mut rep = Representation::<f64>::new(3, 2, &sizes, 1);
    assert_eq!(rep.encoder, rep.target_encoder);
    for p in rep.encoder.parameters_mut() {
        p.data_mut().iter_mut().for_each(|v| *v += 1.0);
    }
    let before = rep.target_encoder.clone();
    rep.update_targets(0.5).unwrap();
    for ((t, o), b) in rep
        .target_encoder
        .parameters()
        .iter()
        .zip(rep.encoder.parameters())
        .zip(before.parameters())
    {
        for i in 0..t.numel() {
            assert!((t.data()[i] - 0.5 * (o.data()[i] + b.data()[i])).abs() < 1e-15);
        }
    }
}

#[test]
fn latent_distance_examples() {
    let mut tape = Tape::<f64>::new();
    let a = tape.constant(Tensor::vector(vec![1.0, 2.0]));
    let b = tape.constant(Tensor::vector(vec![2.0, 1.0]));
    let d = distance_latent(&mut tape, a, b).unwrap();
    assert!((tape.scalar_value(d).unwrap() - 0.4).abs() < 1e-12);

    let x = tape.constant(Tensor::vector(vec![1.0, 0.0]));
    let y = tape.constant(Tensor::vector(vec![0.0, 1.0]));
    let d = distance_latent(&mut tape, x, y).unwrap();
    assert!((tape.scalar_value(d).unwrap() - 2.0).abs() < 1e-15);
}

#[test]
fn projection_distance_blocks_reference_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let heads = ProjectionHeads::<f64>::new(3, 2, &mut rng);
    let mut tape = Tape::new();
    let bound = heads.bind(&mut tape, true);
    let zp = tape.param(Tensor::matrix(2, 3, vec![0.1, 0.5, -0.3, 1.0, 0.2, 0.0]).unwrap());
    let zr = tape.param(Tensor::matrix(2, 3, vec![0.4, -0.5, 0.3, 0.0, 1.2, 0.7]).unwrap());
    let d = distance_projection(&mut tape, &bound, zp, zr).unwrap();
    assert_eq!(tape.value(d).shape(), &[2]);
    let l = tape.sum(d);
    let g = tape.backward(l).unwrap();
    assert!(g.get(zp).is_some());
    assert!(g.get(zr).is_none());
    assert!(bound.target_projector.vars().iter().all(|&v| g.get(v).is_none()));
}

proptest! {
    #[test]
    fn ema_is_a_contraction(seed in 0u64..500, tau in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let online = Tensor::vector((0..6).map(|_| rng.gen_range(-5.0..5.0)).collect());
        let mut target = Tensor::vector((0..6).map(|_| rng.gen_range(-5.0..5.0)).collect());
        let dist = |a: &Tensor<f64>, b: &Tensor<f64>| {
            a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
        };
        let before = dist(&online, &target);
        ema_update(&[&online], &mut [&mut target], tau).unwrap();
        prop_assert!((dist(&online, &target) - tau * before).abs() < 1e-9);
    }

    #[test]
    fn latent_distance_in_bounds(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::matrix(4, 5, (0..20).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap());
        let b = tape.constant(Tensor::matrix(4, 5, (0..20).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap());
        let d = distance_latent(&mut tape, a, b).unwrap();
        for &v in tape.value(d).data() {
            prop_assert!((-1e-12..=4.0 + 1e-12).contains(&v));
        }
    }
}

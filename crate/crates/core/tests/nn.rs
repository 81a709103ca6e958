mod common;

use common::{all_models, batch, small_graph, spec};
use mmfgl::graph::MultimodalGraph;
use mmfgl::nn::{
    check_gradient, cross_entropy, grad_check, info_nce, link_bce, sample_negative_edges, Architecture, Batch, Fusion,
    Model, Objective, ParamVector, TEMPERATURE,
};
use mmfgl::rng;
use ndarray::{arr2, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Dense = Vec<Vec<f64>>;

fn to_dense(a: &Array2<f64>) -> Dense {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn mat(params: &ParamVector, name: &str) -> Dense {
    to_dense(&params.view(name).unwrap().mapv(f64::from))
}

fn mul(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            for t in 0..k {
                out[i][j] += a[i][t] * b[t][j];
            }
        }
    }
    out
}

fn oracle_adjacency(g: &MultimodalGraph) -> Dense {
    let n = g.num_nodes;
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        a[i][i] = 1.0;
    }
    for &(u, v) in &g.edges {
        a[u][v] = 1.0;
        a[v][u] = 1.0;
    }
    let d: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    for i in 0..n {
        for j in 0..n {
            a[i][j] /= (d[i] * d[j]).sqrt();
        }
    }
    a
}

fn oracle_layer(adj: Option<&Dense>, h: &Dense, params: &ParamVector, name: &str, relu: bool) -> Dense {
    let h = adj.map_or_else(|| h.clone(), |a| mul(a, h));
    let mut z = mul(&h, &mat(params, &format!("{name}.w")));
    let b = &mat(params, &format!("{name}.b"))[0];
    for row in &mut z {
        for (v, bias) in row.iter_mut().zip(b) {
            *v += bias;
            if relu {
                *v = v.max(0.0);
            }
        }
    }
    z
}

fn masked_input(g: &MultimodalGraph, m: usize) -> Dense {
    (0..g.num_nodes)
        .map(|i| {
            g.features[m]
                .row(i)
                .iter()
                .map(|&v| if g.modality_mask[[i, m]] { v as f64 } else { 0.0 })
                .collect()
        })
        .collect()
}

fn oracle_forward(model: &Model, params: &ParamVector, g: &MultimodalGraph) -> Dense {
    let spec = model.spec();
    let adj = oracle_adjacency(g);
    let prop = (spec.architecture != Architecture::Mlp).then_some(&adj);
    let depth = spec.num_layers - 1;
    match spec.architecture {
        Architecture::Mlp | Architecture::Gcn => {
            let mut h: Dense = (0..g.num_nodes)
                .map(|i| spec.modalities.iter().flat_map(|&m| masked_input(g, m)[i].clone()).collect())
                .collect();
            for l in 0..depth {
                h = oracle_layer(prop, &h, params, &format!("layer{l}"), true);
            }
            oracle_layer(prop, &h, params, &format!("layer{depth}"), false)
        }
        Architecture::Mmgcn => {
            let branches: Vec<Dense> = spec
                .modalities
                .iter()
                .enumerate()
                .map(|(j, &m)| {
                    let mut h = masked_input(g, m);
                    for l in 0..depth {
                        h = oracle_layer(prop, &h, params, &format!("branch{j}.layer{l}"), true);
                    }
                    h
                })
                .collect();
            let fused: Dense = (0..g.num_nodes)
                .map(|i| {
                    let present: Vec<usize> = (0..branches.len())
                        .filter(|&j| g.modality_mask[[i, spec.modalities[j]]])
                        .collect();
                    match spec.fusion {
                        Fusion::Mean => (0..spec.hidden)
                            .map(|c| {
                                if present.is_empty() {
                                    0.0
                                } else {
                                    present.iter().map(|&j| branches[j][i][c]).sum::<f64>() / present.len() as f64
                                }
                            })
                            .collect(),
                        Fusion::Concat => (0..branches.len())
                            .flat_map(|j| {
                                let keep = present.contains(&j);
                                branches[j][i].iter().map(move |&v| if keep { v } else { 0.0 }).collect::<Vec<_>>()
                            })
                            .collect(),
                    }
                })
                .collect();
            oracle_layer(prop, &fused, params, "head", false)
        }
    }
}

#[test]
fn forward_matches_dense_oracle() {
    for seed in 0..3 {
        let g = small_graph(20, seed);
        let b = batch(&g, seed);
        for model in all_models(&g) {
            let p = model.init(seed + 100);
            let out = model.forward(&p.to_f64(), &b).unwrap().logits;
            let oracle = oracle_forward(&model, &p, &g);
            for (row, orow) in out.rows().into_iter().zip(&oracle) {
                for (a, o) in row.iter().zip(orow) {
                    assert!((a - o).abs() < 1e-5, "{:?}: {a} vs {o}", model.spec().architecture);
                }
            }
        }
    }
}

#[test]
fn zero_params_give_zero_logits() {
    let g = small_graph(12, 1);
    let b = batch(&g, 1);
    for model in all_models(&g) {
        let zeros = vec![0.0; model.num_params()];
        assert!(model.forward(&zeros, &b).unwrap().logits.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn linear_gcn_on_single_edge_is_propagation() {
    let g = MultimodalGraph::from_edges(2, vec![(0, 1)])
        .unwrap()
        .with_features(
            vec![mmfgl::Modality::new("x", 2)],
            vec![arr2(&[[1.0f32, 2.0], [3.0, 5.0]])],
        )
        .unwrap()
        .with_labels(vec![Some(0), Some(1)], 2)
        .unwrap();
    let mut s = mmfgl::nn::ModelSpec::for_graph(&g, Architecture::Gcn, &[], 2, 1).unwrap();
    s.out = 2;
    let model = Model::new(s).unwrap();
    let theta = vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
    let out = model.forward(&theta, &Batch::new(&g, vec![true, true])).unwrap().logits;
    assert!((&out - &arr2(&[[2.0, 3.5], [2.0, 3.5]])).iter().all(|d| d.abs() < 1e-12));
}

#[test]
fn single_modality_mmgcn_equals_gcn() {
    for seed in 0..5 {
        let mut g = small_graph(15, seed);
        g.modality_mask.fill(true);
        let b = batch(&g, seed);
        let names = vec!["text".to_string()];
        let gcn = Model::new(mmfgl::nn::ModelSpec::for_graph(&g, Architecture::Gcn, &names, 6, 3).unwrap()).unwrap();
        let mm = Model::new(mmfgl::nn::ModelSpec::for_graph(&g, Architecture::Mmgcn, &names, 6, 3).unwrap()).unwrap();
        assert_eq!(gcn.num_params(), mm.num_params());
        let theta = gcn.init(seed).to_f64();
        let a = gcn.forward(&theta, &b).unwrap().logits;
        let c = mm.forward(&theta, &b).unwrap().logits;
        assert!((&a - &c).iter().all(|d| d.abs() < 1e-6));
    }
}

#[test]
fn masked_rows_never_leak() {
    let g = small_graph(20, 4);
    let masked: Vec<usize> = (0..20).filter(|&i| !g.modality_mask[[i, 1]]).collect();
    assert!(!masked.is_empty());
    let mut dirty = g.clone();
    for &i in &masked {
        dirty.features[1].row_mut(i).fill(7.5);
    }
    for model in all_models(&g) {
        let theta = model.init(3).to_f64();
        let clean = model.forward(&theta, &batch(&g, 0)).unwrap();
        let noisy = model.forward(&theta, &batch(&dirty, 0)).unwrap();
        assert_eq!(clean.logits, noisy.logits);
    }
}

#[test]
fn forward_is_deterministic() {
    let g = small_graph(20, 9);
    let b = batch(&g, 9);
    for model in all_models(&g) {
        let theta = model.init(1).to_f64();
        assert_eq!(model.forward(&theta, &b).unwrap().logits, model.forward(&theta, &b).unwrap().logits);
    }
}

#[test]
fn cross_entropy_examples() {
    let labels = vec![Some(0), Some(2)];
    let (loss, _) = cross_entropy(&Array2::zeros((2, 4)), &labels, &[true, true]).unwrap();
    assert!((loss - 4f64.ln()).abs() < 1e-12);
    let confident = arr2(&[[500.0, 0.0, 0.0, 0.0], [0.0, 0.0, 500.0, 0.0]]);
    assert!(cross_entropy(&confident, &labels, &[true, true]).unwrap().0 < 1e-12);
    assert!(cross_entropy(&confident, &labels, &[false, false]).is_err());
}

#[test]
fn cross_entropy_gradient_matches_finite_differences() {
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let logits = Array2::from_shape_fn((5, 3), |_| r.random_range(-2.0..2.0));
    let labels: Vec<Option<usize>> = (0..5).map(|i| Some(i % 3)).collect();
    let mask = [true, true, false, true, true];
    let (_, g) = cross_entropy(&logits, &labels, &mask).unwrap();
    let flat: Vec<f64> = logits.iter().copied().collect();
    let eval = |t: &[f64]| {
        let x = Array2::from_shape_vec((5, 3), t.to_vec()).unwrap();
        Ok((cross_entropy(&x, &labels, &mask)?.0, vec![]))
    };
    for i in 0..flat.len() {
        let mut one = vec![0.0; flat.len()];
        one[i] = 1.0;
        let err = full_check(&flat, &g.iter().copied().collect::<Vec<_>>(), eval);
        assert!(err < 1e-4, "{err}");
    }
}

/// Checks every coordinate by running the sampler over many seeds.
fn full_check<F>(theta: &[f64], analytic: &[f64], eval: F) -> f64
where
    F: Fn(&[f64]) -> mmfgl::Result<(f64, Vec<bool>)> + Copy,
{
    (0..40).map(|s| check_gradient(theta, analytic, eval, s).unwrap()).fold(0.0, f64::max)
}

#[test]
fn link_loss_examples() {
    let zero = Array2::zeros((4, 3));
    let (loss, _) = link_bce(&zero, &[(0, 1)], &[(2, 3)]).unwrap();
    assert!((loss - 2f64.ln()).abs() < 1e-12);
    let sep = arr2(&[[30.0, 0.0], [30.0, 0.0], [30.0, 0.0], [-30.0, 0.0]]);
    assert!(link_bce(&sep, &[(0, 1)], &[(2, 3)]).unwrap().0 < 1e-12);
    assert!(link_bce(&zero, &[], &[]).is_err());

    let mut r = ChaCha8Rng::seed_from_u64(5);
    let emb = Array2::from_shape_fn((6, 3), |_| r.random_range(-1.0..1.0));
    let pos = [(0, 1), (2, 3), (1, 4)];
    let neg = [(0, 5), (3, 4), (2, 5)];
    let (_, g) = link_bce(&emb, &pos, &neg).unwrap();
    let flat: Vec<f64> = emb.iter().copied().collect();
    let err = full_check(&flat, &g.iter().copied().collect::<Vec<_>>(), |t| {
        let x = Array2::from_shape_vec((6, 3), t.to_vec()).unwrap();
        Ok((link_bce(&x, &pos, &neg)?.0, vec![]))
    });
    assert!(err < 1e-4, "{err}");
}

#[test]
fn negative_sampling_avoids_edges() {
    let edges = vec![(0, 1), (1, 2), (2, 3)];
    let neg = sample_negative_edges(5, &edges, 50, &mut rng::rng_from_seed(1));
    assert_eq!(neg.len(), 50);
    assert!(neg.iter().all(|&(u, v)| u < v && !edges.contains(&(u, v))));
    let complete: Vec<_> = (0..4).flat_map(|u| (u + 1..4).map(move |v| (u, v))).collect();
    assert!(sample_negative_edges(4, &complete, 3, &mut rng::rng_from_seed(1)).is_empty());
}

#[test]
fn contrastive_examples() {
    let eye = Array2::<f64>::eye(3);
    assert!(info_nce(&eye, &eye, 1e-3).unwrap().0 < 1e-12);
    let same = arr2(&[[1.0, 2.0], [1.0, 2.0]]);
    let (loss, _, _) = info_nce(&same, &arr2(&[[0.5, -1.0], [0.5, -1.0]]), TEMPERATURE).unwrap();
    assert!((loss - 2f64.ln()).abs() < 1e-9, "{loss}");
    assert!(info_nce(&arr2(&[[1.0, 0.0]]), &arr2(&[[1.0, 0.0]]), TEMPERATURE).is_err());

    let mut r = ChaCha8Rng::seed_from_u64(8);
    let za = Array2::from_shape_fn((6, 4), |_| r.random_range(-1.0..1.0));
    let zb = Array2::from_shape_fn((6, 4), |_| r.random_range(-1.0..1.0));
    let (_, ga, gb) = info_nce(&za, &zb, 0.5).unwrap();
    let theta: Vec<f64> = za.iter().chain(zb.iter()).copied().collect();
    let analytic: Vec<f64> = ga.iter().chain(gb.iter()).copied().collect();
    let err = full_check(&theta, &analytic, |t| {
        let a = Array2::from_shape_vec((6, 4), t[..24].to_vec()).unwrap();
        let b = Array2::from_shape_vec((6, 4), t[24..].to_vec()).unwrap();
        Ok((info_nce(&a, &b, 0.5)?.0, vec![]))
    });
    assert!(err < 1e-4, "{err}");
}

#[test]
fn reconstruction_examples() {
    let g = small_graph(10, 3);
    let b = batch(&g, 3);
    let model = Model::new(spec(&g, Architecture::Gcn, 2, Fusion::Mean)).unwrap();
    let zeros = vec![0.0; model.num_params()];
    let obj = Objective::masked_reconstruction(10, 0.3, 4).unwrap();
    let Objective::Reconstruction { nodes } = &obj else { unreachable!() };
    assert_eq!(nodes.len(), 3);
    let (loss, _) = model.loss_and_grad(&zeros, &b, &obj).unwrap();
    let expected: f64 = nodes
        .iter()
        .map(|&i| b.features.iter().map(|x| x.row(i).dot(&x.row(i))).sum::<f64>() / 8.0)
        .sum::<f64>()
        / nodes.len() as f64;
    assert!((loss - expected).abs() < 1e-12);

    let tiny = Objective::masked_reconstruction(10, 1e-9, 4).unwrap();
    let Objective::Reconstruction { nodes } = tiny else { unreachable!() };
    assert_eq!(nodes.len(), 1);
    assert!(Objective::masked_reconstruction(10, 0.0, 4).is_err());
}

fn objectives(model: &Model, g: &MultimodalGraph, b: &Batch, seed: u64) -> Vec<(&'static str, Objective)> {
    let pos: Vec<_> = g.edges.iter().copied().take(10).collect();
    let neg = sample_negative_edges(g.num_nodes, &g.edges, pos.len(), &mut rng::rng_from_seed(seed));
    let mut out = vec![
        ("classification", Objective::Classification),
        ("link", Objective::Link { pos, neg }),
        ("reconstruction", Objective::masked_reconstruction(g.num_nodes, 0.3, seed).unwrap()),
    ];
    if model.spec().architecture == Architecture::Mmgcn {
        out.push(("contrastive", Objective::contrastive(model, b, TEMPERATURE).unwrap()));
    }
    out
}

#[test]
fn all_losses_pass_grad_check() {
    for seed in 0..5 {
        let g = small_graph(20, seed);
        let b = batch(&g, seed);
        for model in all_models(&g) {
            let p = model.init(seed + 7);
            for (name, obj) in objectives(&model, &g, &b, seed) {
                let err = grad_check(&model, &p, &b, &obj, seed).unwrap();
                assert!(err < 1e-4, "{:?} {name}: {err}", model.spec().architecture);
            }
        }
    }
}

#[test]
fn linear_regression_grad_check_is_near_exact() {
    let g = small_graph(15, 2);
    let b = batch(&g, 2);
    let model = Model::new(spec(&g, Architecture::Mlp, 1, Fusion::Mean)).unwrap();
    let target = Array2::from_shape_fn((15, 3), |(i, j)| (i + 2 * j) as f64 * 0.1);
    let err = grad_check(&model, &model.init(1), &b, &Objective::Regression { target }, 3).unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn corrupted_gradient_is_detected() {
    let g = small_graph(20, 6);
    let b = batch(&g, 6);
    let model = Model::new(spec(&g, Architecture::Gcn, 2, Fusion::Mean)).unwrap();
    let theta = model.init(2).to_f64();
    let (_, mut grad) = model.loss_and_grad(&theta, &b, &Objective::Classification).unwrap();
    grad.iter_mut().for_each(|v| *v += 0.1);
    let err = check_gradient(&theta, &grad, |t| model.loss_value(t, &b, &Objective::Classification), 1).unwrap();
    assert!(err > 1e-2, "{err}");
}

#[test]
fn prototype_regularizer_passes_grad_check() {
    let g = small_graph(20, 7);
    let b = batch(&g, 7);
    let model = Model::new(spec(&g, Architecture::Mmgcn, 2, Fusion::Mean)).unwrap();
    let protos = Array2::from_shape_fn((3, 4), |(c, j)| (c as f64 - j as f64) * 0.2);
    let obj = Objective::Sum(vec![
        (1.0, Objective::Classification),
        (
            1.0,
            Objective::Prototype {
                prototypes: protos,
                present: vec![true, false, true],
                lambda: 0.5,
            },
        ),
    ]);
    assert!(grad_check(&model, &model.init(4), &b, &obj, 2).unwrap() < 1e-4);
}

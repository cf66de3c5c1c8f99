//! Whole-system release checks, one test per gate. Every test prints a
//! single `<name>: PASS` or `<name>: FAIL (...)` line (visible with
//! `cargo test -p feddense-cli --test acceptance -- --nocapture`) and
//! panics on failure.

use feddense_core::encode::{
    build_structural_vectors, dense_matmul, dense_walk_matrix, rwpe, StructEncodingConfig,
};
use feddense_core::experiment::{
    run_experiment, DatasetSpec, ExperimentConfig, RunOptions, SplitFractions,
};
use feddense_core::fed::{weighted_average, Federation, FederationConfig, Strategy};
use feddense_core::graph::{
    generate_synthetic, split_dataset, FeatureMode, Split, SyntheticGroup, SyntheticKind,
    SyntheticRecipe,
};
use feddense_core::hetero::{
    heatmap, js_divergence, EmpiricalDistribution, HeteroConfig, HeteroMode,
};
use feddense_core::model::{forward, init_params};
use feddense_core::nn::gradcheck::{central_differences, max_relative_error, relative_error};
use feddense_core::nn::{OptimizerConfig, Tape, Var};
use feddense_core::resource::{analytic_forward_flops, measured_forward_flops, model_report};
use feddense_core::{Graph, GraphDataset, ModelConfig, ModelVariant, Scalar, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::time::Instant;

type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !($cond) {
            return Err(format!($($msg)+));
        }
    };
}

fn report(name: &str, outcome: Check) {
    match &outcome {
        Ok(()) => println!("{name}: PASS"),
        Err(m) => println!("{name}: FAIL ({m})"),
    }
    if let Err(m) = outcome {
        panic!("{name}: {m}");
    }
}

// ---------------------------------------------------------------- 1 --

/// One differentiable op: analytic tape gradients against central
/// finite differences of a from-scratch re-evaluation.
fn check_op<S: Scalar>(
    name: &str,
    inputs: &[Tensor<S>],
    h: f64,
    tol: f64,
    build: impl Fn(&mut Tape<S>, &[Var]) -> Var,
) -> Check {
    let mut tape = Tape::<S>::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let loss = build(&mut tape, &vars);
    tape.backward(loss).map_err(|e| e.to_string())?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| tape.grad(v).expect("leaf gradient").to_f64_vec())
        .collect();

    let err = max_relative_error(inputs, &analytic, h, |ts: &[Tensor<S>]| {
        let mut tape = Tape::<S>::new();
        let vars: Vec<Var> = ts.iter().map(|t| tape.leaf(t.clone(), false)).collect();
        let loss = build(&mut tape, &vars);
        Scalar::to_f64(tape.value(loss).item())
    });
    ensure!(err < tol, "{name}: relative error {err:.3e} >= {tol:.0e}");
    Ok(())
}

fn rand_tensor<S: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<S> {
    // Values bounded away from 0 so relu kinks stay out of FD reach.
    let data: Vec<S> = (0..rows * cols)
        .map(|_| {
            let v = rng.random_range(0.1..1.0);
            S::from_f64(if rng.random::<bool>() { v } else { -v })
        })
        .collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// `h_lin` drives the ops that are (piecewise) linear per coordinate,
/// where central differences have no truncation term and a wide step
/// only suppresses roundoff; `h_smooth` drives the softmax paths.
fn check_all_ops<S: Scalar>(h_lin: f64, h_smooth: f64, tol: f64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let g = generate_synthetic(
        SyntheticKind::ErdosRenyi { edge_prob: 0.5 },
        5,
        FeatureMode::Constant,
        3,
    )
    .unwrap();

    let x = rand_tensor::<S>(&mut rng, 3, 4);
    let w = rand_tensor::<S>(&mut rng, 4, 2);
    let b = rand_tensor::<S>(&mut rng, 1, 2);
    check_op("linear", &[x, w, b], h_lin, tol, |tape, v| {
        let y = tape.linear(v[0], v[1], v[2]).unwrap();
        tape.sum_all(y).unwrap()
    })?;

    let h5 = rand_tensor::<S>(&mut rng, 5, 3);
    let w5 = rand_tensor::<S>(&mut rng, 3, 2);
    let b5 = rand_tensor::<S>(&mut rng, 1, 2);
    check_op(
        "gcn_conv",
        &[h5.clone(), w5.clone(), b5.clone()],
        h_lin,
        tol,
        |tape, v| {
            let act = tape.gcn_conv(&g, v[0], v[1], v[2]).unwrap();
            tape.sum_all(act.post_update).unwrap()
        },
    )?;
    check_op("gin_conv", &[h5, w5, b5], h_lin, tol, |tape, v| {
        let act = tape.gin_conv(&g, v[0], v[1], v[2], 0.3).unwrap();
        tape.sum_all(act.post_update).unwrap()
    })?;

    let xd = rand_tensor::<S>(&mut rng, 4, 3);
    check_op("relu_dropout", &[xd], h_lin, tol, |tape, v| {
        // The mask is redrawn identically on every FD evaluation.
        let mut mask_rng = ChaCha8Rng::seed_from_u64(7);
        let y = tape.relu_dropout(v[0], 0.4, true, &mut mask_rng).unwrap();
        tape.sum_all(y).unwrap()
    })?;

    let a = rand_tensor::<S>(&mut rng, 3, 2);
    let c = rand_tensor::<S>(&mut rng, 3, 3);
    check_op("concat+pool+softmax", &[a, c], h_smooth, tol, |tape, v| {
        let cat = tape.concat_cols(&[v[0], v[1]]).unwrap();
        let pooled = tape.mean_pool(cat).unwrap();
        tape.softmax_cross_entropy(pooled, 2).unwrap()
    })?;

    let m = rand_tensor::<S>(&mut rng, 2, 3);
    check_op("mean_pool", &[m.clone()], h_lin, tol, |tape, v| {
        let pooled = tape.mean_pool(v[0]).unwrap();
        tape.sum_all(pooled).unwrap()
    })?;
    check_op("sum_all", &[m], h_lin, tol, |tape, v| tape.sum_all(v[0]).unwrap())?;

    let logits = rand_tensor::<S>(&mut rng, 1, 4);
    check_op("softmax_cross_entropy", &[logits], h_smooth, tol, |tape, v| {
        tape.softmax_cross_entropy(v[0], 1).unwrap()
    })?;

    let s1 = rand_tensor::<S>(&mut rng, 1, 1);
    let s2 = rand_tensor::<S>(&mut rng, 1, 1);
    let s3 = rand_tensor::<S>(&mut rng, 1, 1);
    check_op("mean_scalars", &[s1, s2, s3], h_lin, tol, |tape, v| {
        tape.mean_scalars(v).unwrap()
    })?;
    Ok(())
}

/// Gradient of the whole two-channel forward pass with respect to every
/// parameter tensor, inputs held fixed.
fn check_full_forward<S: Scalar>(h: f64, tol: f64) -> Check {
    let g = generate_synthetic(
        SyntheticKind::ErdosRenyi { edge_prob: 0.6 },
        5,
        FeatureMode::Degree,
        11,
    )
    .unwrap();
    let cfg = ModelConfig {
        variant: ModelVariant::Ddc,
        num_layers: 3,
        hidden: 8,
        feature_dim: 1,
        struct_dim: 6,
        num_classes: 2,
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let enc = StructEncodingConfig {
        degree_dim: 3,
        rwpe_dim: 3,
        ..StructEncodingConfig::default()
    };
    let x = Tensor::<S>::from_f32_slice(&[g.num_nodes(), 1], g.node_features()).unwrap();
    let s_data = build_structural_vectors(&g, &enc).map_err(|e| e.to_string())?;
    let s = Tensor::<S>::from_f32_slice(&[g.num_nodes(), 6], &s_data).unwrap();
    let params = init_params::<S>(&cfg, 5).unwrap();
    let inputs: Vec<Tensor<S>> = params.entries().iter().map(|e| e.tensor.clone()).collect();

    let build = |tape: &mut Tape<S>, vars: &[Var]| -> Var {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fv = forward(tape, &g, &x, Some(&s), vars, &cfg, true, &mut rng).unwrap();
        tape.softmax_cross_entropy(fv.logits, 1).unwrap()
    };

    let mut tape = Tape::<S>::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let loss = build(&mut tape, &vars);
    tape.backward(loss).map_err(|e| e.to_string())?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| tape.grad(v).expect("parameter gradient").to_f64_vec())
        .collect();

    let numeric = central_differences(&inputs, h, |ts: &[Tensor<S>]| {
        let mut tape = Tape::<S>::new();
        let vars: Vec<Var> = ts.iter().map(|t| tape.leaf(t.clone(), false)).collect();
        let loss = build(&mut tape, &vars);
        Scalar::to_f64(tape.value(loss).item())
    });
    // One gradient vector over all parameters: per-coordinate differences
    // against the scale of the whole gradient, as in the per-op checks.
    let flat_a: Vec<f64> = analytic.iter().flatten().copied().collect();
    let flat_n: Vec<f64> = numeric.iter().flatten().copied().collect();
    let err = relative_error(&flat_a, &flat_n);
    if err >= tol {
        let worst = analytic
            .iter()
            .zip(&numeric)
            .zip(params.entries())
            .max_by(|((a1, n1), _), ((a2, n2), _)| {
                let d1 = a1.iter().zip(*n1).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max);
                let d2 = a2.iter().zip(*n2).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max);
                d1.total_cmp(&d2)
            })
            .map(|(_, entry)| entry.name.clone())
            .unwrap_or_default();
        ensure!(
            false,
            "full forward: relative error {err:.3e} >= {tol:.0e} (worst entry '{worst}')"
        );
    }
    Ok(())
}

#[test]
fn gradients_match_finite_differences() {
    let started = Instant::now();
    report("gradients_match_finite_differences", (|| {
        check_all_ops::<f32>(3e-2, 3e-3, 1e-4)?;
        check_all_ops::<f64>(1e-6, 1e-5, 1e-6)?;
        check_full_forward::<f64>(1e-6, 1e-6)?;
        check_full_forward::<f32>(3e-3, 1e-4)?;
        ensure!(
            started.elapsed().as_secs() < 10,
            "took {:?}, budget 10 s",
            started.elapsed()
        );
        Ok(())
    })());
}

// ---------------------------------------------------------------- 2 --

#[test]
fn parameter_counts_follow_the_layer_formula() {
    report("parameter_counts_follow_the_layer_formula", (|| {
        for (layers, r) in [(2usize, 8usize), (3, 16), (3, 32)] {
            let cfg = ModelConfig {
                variant: ModelVariant::Ddc,
                num_layers: layers,
                hidden: r,
                feature_dim: 7,
                struct_dim: 9,
                num_classes: 3,
                ..ModelConfig::default()
            };
            let params = init_params::<f32>(&cfg, 0).unwrap();
            for l in 1..=layers {
                let fw = params
                    .entry(&format!("feature_layers.{l}.weight"))
                    .expect("feature weight");
                ensure!(
                    fw.tensor.len() == 2 * l * r * r,
                    "feature layer {l} (L={layers}, r={r}): {} weights, formula gives {}",
                    fw.tensor.len(),
                    2 * l * r * r
                );
                let sw = params
                    .entry(&format!("struct_layers.{l}.weight"))
                    .expect("struct weight");
                ensure!(
                    sw.tensor.len() == r * r,
                    "struct layer {l} (L={layers}, r={r}): {} weights, formula gives {}",
                    sw.tensor.len(),
                    r * r
                );
            }
        }
        Ok(())
    })());
}

// ---------------------------------------------------------------- 3 --

fn mixed_recipe(seed: u64, kinds: [SyntheticKind; 2]) -> SyntheticRecipe {
    SyntheticRecipe {
        name: format!("mix{seed}"),
        seed,
        groups: kinds
            .into_iter()
            .enumerate()
            .map(|(label, kind)| SyntheticGroup {
                kind,
                count: 8,
                min_nodes: 6,
                max_nodes: 10,
                feature_mode: FeatureMode::Degree,
                label,
            })
            .collect(),
    }
}

#[test]
fn only_structural_parameters_are_shared() {
    report("only_structural_parameters_are_shared", (|| {
        let started = Instant::now();
        let kinds = [
            [SyntheticKind::Cycle, SyntheticKind::Path],
            [SyntheticKind::Star, SyntheticKind::Cycle],
            [SyntheticKind::Path, SyntheticKind::ErdosRenyi { edge_prob: 0.4 }],
            [SyntheticKind::ErdosRenyi { edge_prob: 0.6 }, SyntheticKind::Star],
        ];
        let enc = StructEncodingConfig {
            degree_dim: 4,
            rwpe_dim: 4,
            ..StructEncodingConfig::default()
        };
        let client_data: Vec<_> = kinds
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let ds = mixed_recipe(20 + i as u64, k).build().unwrap();
                let split = split_dataset(&ds, (0.8, 0.1, 0.1), i as u64).unwrap();
                (ds, split)
            })
            .collect();
        let cfg = FederationConfig {
            num_clients: 4,
            rounds: 10,
            local_epochs: 1,
            batch_size: 8,
            strategy: Strategy::FedDense,
            mu: 0.01,
            model: ModelConfig {
                variant: ModelVariant::Ddc,
                num_layers: 2,
                hidden: 8,
                dropout: 0.2,
                ..ModelConfig::default()
            },
            optimizer: OptimizerConfig::default(),
            seed: 99,
        };
        let mut fed = Federation::new(cfg, client_data, &enc).unwrap();

        let bits = |t: &Tensor<f32>| -> Vec<u32> { t.data().iter().map(|v| v.to_bits()).collect() };
        let structural_subsets_match = |fed: &Federation, round: usize| -> Check {
            for (p, server_entry) in fed.server_params.entries().iter().enumerate() {
                if !server_entry.structural {
                    continue;
                }
                for client in &fed.clients {
                    let entry = &client.params.entries()[p];
                    ensure!(
                        bits(&entry.tensor) == bits(&server_entry.tensor),
                        "round {round} start: client {} structural '{}' differs from server",
                        client.id,
                        entry.name
                    );
                }
            }
            Ok(())
        };

        // Round 1 starts from the post-init broadcast.
        structural_subsets_match(&fed, 1)?;
        for round in 1..=10 {
            fed.run_round(round, false).map_err(|e| e.to_string())?;
            // State after round k is the start state of round k+1.
            structural_subsets_match(&fed, round + 1)?;
            for (p, server_entry) in fed.server_params.entries().iter().enumerate() {
                if server_entry.structural {
                    continue;
                }
                for a in 0..fed.clients.len() {
                    for b in (a + 1)..fed.clients.len() {
                        let ta = &fed.clients[a].params.entries()[p].tensor;
                        let tb = &fed.clients[b].params.entries()[p].tensor;
                        ensure!(
                            bits(ta) != bits(tb),
                            "after round {round}: feature '{}' identical on clients {a} and {b}",
                            server_entry.name
                        );
                    }
                }
            }
        }
        ensure!(
            started.elapsed().as_secs() < 60,
            "took {:?}, budget 60 s",
            started.elapsed()
        );
        Ok(())
    })());
}

// ---------------------------------------------------------------- 4 --

#[test]
fn aggregation_matches_brute_force() {
    report("aggregation_matches_brute_force", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        for set in 0..100 {
            let variant = [ModelVariant::Ddc, ModelVariant::Decoupled, ModelVariant::Single]
                [rng.random_range(0..3)];
            let cfg = ModelConfig {
                variant,
                num_layers: rng.random_range(1..=3),
                hidden: rng.random_range(2..=5),
                feature_dim: rng.random_range(1..=4),
                struct_dim: if variant.has_struct() { rng.random_range(2..=6) } else { 0 },
                num_classes: rng.random_range(2..=4),
                ..ModelConfig::default()
            };
            let k = rng.random_range(2..=5);
            let params: Vec<_> = (0..k)
                .map(|i| init_params::<f32>(&cfg, set as u64 * 100 + i as u64).unwrap())
                .collect();
            let counts: Vec<usize> = (0..k).map(|_| rng.random_range(1..=50)).collect();

            let updates: Vec<(&_, usize)> = params.iter().zip(counts.iter().copied()).collect();
            let avg = weighted_average(&updates).map_err(|e| e.to_string())?;

            let total: f64 = counts.iter().sum::<usize>() as f64;
            for (e, entry) in avg.entries().iter().enumerate() {
                let mut oracle = vec![0.0f64; entry.tensor.len()];
                for (p, &n) in params.iter().zip(&counts) {
                    let w = n as f64 / total;
                    for (o, &v) in oracle.iter_mut().zip(p.entries()[e].tensor.data()) {
                        *o += w * v as f64;
                    }
                }
                let got = entry.tensor.to_f64_vec();
                let err = relative_error(&got, &oracle);
                ensure!(
                    err < 1e-7,
                    "set {set} entry '{}': relative error {err:.3e}",
                    entry.name
                );
            }
        }
        Ok(())
    })());
}

// ---------------------------------------------------------------- 5 --

#[test]
fn structural_payload_is_a_fifth_of_full_sharing() {
    report("structural_payload_is_a_fifth_of_full_sharing", (|| {
        let feddense_cfg = ModelConfig {
            variant: ModelVariant::Ddc,
            num_layers: 3,
            hidden: 16,
            feature_dim: 32,
            struct_dim: 32,
            num_classes: 2,
            ..ModelConfig::default()
        };
        let baseline_cfg = ModelConfig {
            variant: ModelVariant::Single,
            num_layers: 3,
            hidden: 64,
            feature_dim: 32,
            struct_dim: 0,
            num_classes: 2,
            ..ModelConfig::default()
        };
        let fd = model_report(&feddense_cfg, Strategy::FedDense, (20, 40)).unwrap();
        let base = model_report(&baseline_cfg, Strategy::FedAvg, (20, 40)).unwrap();

        ensure!(
            fd.payload_bytes_per_round == 4 * fd.param_count_structural,
            "two-channel payload {} != 4 x {} structural params",
            fd.payload_bytes_per_round,
            fd.param_count_structural
        );
        ensure!(
            base.payload_bytes_per_round == 4 * base.param_count_total,
            "full-sharing payload {} != 4 x {} params",
            base.payload_bytes_per_round,
            base.param_count_total
        );
        let ratio = fd.payload_bytes_per_round as f64 / base.payload_bytes_per_round as f64;
        ensure!(ratio < 0.20, "payload ratio {ratio:.4} >= 0.20");

        // The bytes a real federation reports equal 4x the shared scalar
        // count, row by row.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let make_client = |rng: &mut ChaCha8Rng, seed: u64| {
            let graphs: Vec<Graph> = (0..12)
                .map(|i| {
                    let g = generate_synthetic(
                        SyntheticKind::ErdosRenyi { edge_prob: 0.5 },
                        rng.random_range(6..=10),
                        FeatureMode::Constant,
                        seed * 100 + i,
                    )
                    .unwrap();
                    let n = g.num_nodes();
                    let feats: Vec<f32> = (0..n * 32).map(|_| rng.random::<f32>()).collect();
                    Graph::new(n, g.edges().to_vec(), feats, 32, (i % 2) as usize).unwrap()
                })
                .collect();
            let ds = GraphDataset::new(format!("wide{seed}"), graphs, 2).unwrap();
            let split = split_dataset(&ds, (0.8, 0.1, 0.1), seed).unwrap();
            (ds, split)
        };
        let client_data = vec![make_client(&mut rng, 1), make_client(&mut rng, 2)];
        let cfg = FederationConfig {
            num_clients: 2,
            rounds: 1,
            local_epochs: 1,
            batch_size: 16,
            strategy: Strategy::FedDense,
            mu: 0.01,
            model: feddense_cfg,
            optimizer: OptimizerConfig::default(),
            seed: 3,
        };
        let mut fed = Federation::new(cfg, client_data, &StructEncodingConfig::default()).unwrap();
        ensure!(
            fed.payload_bytes_per_client() == 4 * fed.shared_scalar_count() as u64,
            "federation bytes {} != 4 x {} shared scalars",
            fed.payload_bytes_per_client(),
            fed.shared_scalar_count()
        );
        ensure!(
            fed.payload_bytes_per_client() == fd.payload_bytes_per_round,
            "federation payload {} != analytic report payload {}",
            fed.payload_bytes_per_client(),
            fd.payload_bytes_per_round
        );
        let rows = fed.run_round(1, false).map_err(|e| e.to_string())?;
        for row in rows {
            let expect = if row.split == Split::Train {
                fd.payload_bytes_per_round
            } else {
                0
            };
            ensure!(
                row.payload_bytes == expect,
                "round 1 client {} {} row carries {} bytes, expected {expect}",
                row.client_id,
                row.split.name(),
                row.payload_bytes
            );
        }
        Ok(())
    })());
}

// ---------------------------------------------------------------- 6 --

fn structure_task_config(
    dir: &std::path::Path,
    strategy: Strategy,
    variant: ModelVariant,
) -> ExperimentConfig {
    let client = |seed: u64| {
        let group = |kind, label| SyntheticGroup {
            kind,
            count: 20,
            min_nodes: 12,
            max_nodes: 20,
            feature_mode: FeatureMode::Constant,
            label,
        };
        DatasetSpec::Synthetic {
            recipe: SyntheticRecipe {
                name: format!("rings_vs_chains_{seed}"),
                seed,
                groups: vec![group(SyntheticKind::Cycle, 0), group(SyntheticKind::Path, 1)],
            },
        }
    };
    ExperimentConfig {
        federation: FederationConfig {
            num_clients: 4,
            rounds: 40,
            local_epochs: 2,
            batch_size: 8,
            strategy,
            mu: 0.01,
            model: ModelConfig {
                variant,
                num_layers: 3,
                hidden: 8,
                dropout: 0.0,
                ..ModelConfig::default()
            },
            optimizer: OptimizerConfig {
                lr: 0.002,
                ..OptimizerConfig::default()
            },
            seed: 1,
        },
        clients: (10..14).map(client).collect(),
        encoding: StructEncodingConfig::default(),
        output_dir: dir.to_path_buf(),
        repetitions: 5,
        split_fractions: SplitFractions::default(),
    }
}

/// Final-round mean test accuracy per repetition, read back from the
/// emitted CSVs.
fn per_rep_test_accuracy(
    dir: &std::path::Path,
    strategy: Strategy,
    reps: usize,
    rounds: usize,
) -> Vec<f64> {
    (0..reps)
        .map(|rep| {
            let path = dir.join(format!("metrics_{}_rep{rep}.csv", strategy.name()));
            let text = fs::read_to_string(&path).expect("metrics csv");
            let prefix = format!("{rounds},");
            let accs: Vec<f64> = text
                .lines()
                .filter(|l| l.starts_with(&prefix) && l.contains(",test,"))
                .map(|l| l.split(',').nth(5).unwrap().parse::<f64>().unwrap())
                .collect();
            assert!(!accs.is_empty(), "no final test rows in {}", path.display());
            accs.iter().sum::<f64>() / accs.len() as f64
        })
        .collect()
}

#[test]
fn structure_task_separates_the_strategies() {
    report("structure_task_separates_the_strategies", (|| {
        let started = Instant::now();
        let tmp = tempfile::tempdir().unwrap();
        let two_channel = structure_task_config(
            &tmp.path().join("feddense"),
            Strategy::FedDense,
            ModelVariant::Ddc,
        );
        let single_channel = structure_task_config(
            &tmp.path().join("single"),
            Strategy::FedAvg,
            ModelVariant::Single,
        );
        run_experiment(&two_channel, RunOptions::default()).map_err(|e| e.to_string())?;
        run_experiment(&single_channel, RunOptions::default()).map_err(|e| e.to_string())?;

        let fd = per_rep_test_accuracy(&tmp.path().join("feddense"), Strategy::FedDense, 5, 40);
        let single = per_rep_test_accuracy(&tmp.path().join("single"), Strategy::FedAvg, 5, 40);
        let passing = fd
            .iter()
            .zip(&single)
            .filter(|(f, s)| **f >= 0.90 && **s <= 0.65)
            .count();
        ensure!(
            passing >= 4,
            "separation holds in {passing}/5 repetitions (two-channel {fd:?}, single {single:?})"
        );
        ensure!(
            started.elapsed().as_secs() < 300,
            "took {:?}, budget 300 s",
            started.elapsed()
        );
        Ok(())
    })());
}

// ---------------------------------------------------------------- 7 --

#[test]
fn rwpe_matches_dense_matrix_powers() {
    report("rwpe_matches_dense_matrix_powers", (|| {
        let k = 8;
        for seed in 0..50u64 {
            let n = 2 + (seed % 7) as usize;
            let g = generate_synthetic(
                SyntheticKind::ErdosRenyi { edge_prob: 0.4 },
                n,
                FeatureMode::Constant,
                seed,
            )
            .unwrap();
            let p = dense_walk_matrix(&g);
            let mut power = p.clone();
            let mut oracle = vec![vec![0.0f64; k]; n];
            for step in 0..k {
                for (v, row) in oracle.iter_mut().enumerate() {
                    row[step] = power[v][v];
                }
                power = dense_matmul(&power, &p);
            }
            for v in 0..n {
                let got = rwpe(&g, v, k).map_err(|e| e.to_string())?;
                for step in 0..k {
                    let diff = (got[step] - oracle[v][step]).abs();
                    ensure!(
                        diff < 1e-10,
                        "graph {seed} node {v} step {}: |{} - {}| = {diff:.3e}",
                        step + 1,
                        got[step],
                        oracle[v][step]
                    );
                }
            }
        }

        let triangle =
            generate_synthetic(SyntheticKind::Cycle, 3, FeatureMode::Constant, 0).unwrap();
        for v in 0..3 {
            let got = rwpe(&triangle, v, 3).map_err(|e| e.to_string())?;
            let expect = [0.0, 0.5, 0.25];
            for (a, b) in got.iter().zip(expect) {
                ensure!(
                    (a - b).abs() < 1e-12,
                    "triangle node {v}: {got:?} != {expect:?}"
                );
            }
        }
        Ok(())
    })());
}

// ---------------------------------------------------------------- 8 --

#[test]
fn jsd_is_a_bounded_symmetric_divergence() {
    report("jsd_is_a_bounded_symmetric_divergence", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(88);
        let random_dist = |rng: &mut ChaCha8Rng, dim: usize| {
            let mut probs: Vec<f64> = (0..dim)
                .map(|_| {
                    if rng.random::<f64>() < 0.3 {
                        0.0
                    } else {
                        rng.random::<f64>()
                    }
                })
                .collect();
            let sum: f64 = probs.iter().sum();
            if sum == 0.0 {
                probs[0] = 1.0;
            } else {
                probs.iter_mut().for_each(|p| *p /= sum);
            }
            let edges: Vec<f64> = (0..=dim).map(|k| k as f64).collect();
            EmpiricalDistribution::new(edges, probs).unwrap()
        };
        for i in 0..1000 {
            let dim = 2 + (i % 11);
            let p = random_dist(&mut rng, dim);
            let q = random_dist(&mut rng, dim);
            let d_pq = js_divergence(&p, &q).map_err(|e| e.to_string())?;
            let d_qp = js_divergence(&q, &p).map_err(|e| e.to_string())?;
            ensure!(
                (d_pq - d_qp).abs() < 1e-12,
                "pair {i}: asymmetric ({d_pq} vs {d_qp})"
            );
            ensure!(d_pq >= 0.0, "pair {i}: negative divergence {d_pq}");
            ensure!(d_pq <= 1.0 + 1e-12, "pair {i}: divergence {d_pq} above 1");
            ensure!(
                js_divergence(&p, &p).map_err(|e| e.to_string())? == 0.0,
                "pair {i}: self-divergence nonzero"
            );
            let l1: f64 = p
                .probabilities
                .iter()
                .zip(&q.probabilities)
                .map(|(a, b)| (a - b).abs())
                .sum();
            if l1 > 1e-9 {
                ensure!(d_pq > 0.0, "pair {i}: distinct distributions at divergence 0");
            }
        }

        let ds = mixed_recipe(7, [SyntheticKind::Cycle, SyntheticKind::Star])
            .build()
            .unwrap();
        for mode in [HeteroMode::Feature, HeteroMode::Structure] {
            let m = heatmap(&[ds.clone(), ds.clone()], mode, &HeteroConfig::default())
                .map_err(|e| e.to_string())?;
            ensure!(
                m == vec![vec![0.0, 0.0], vec![0.0, 0.0]],
                "identical datasets give nonzero {mode:?} heatmap: {m:?}"
            );
        }
        Ok(())
    })());
}

// ---------------------------------------------------------------- 9 --

#[test]
fn measured_flops_equal_the_analytic_model() {
    report("measured_flops_equal_the_analytic_model", (|| {
        let variants = [ModelVariant::Ddc, ModelVariant::Decoupled, ModelVariant::Single];
        let mut rng = ChaCha8Rng::seed_from_u64(909);
        for (i, &variant) in variants.iter().enumerate() {
            let cfg = ModelConfig {
                variant,
                num_layers: rng.random_range(1..=3),
                hidden: rng.random_range(2..=16),
                feature_dim: rng.random_range(1..=8),
                struct_dim: if variant.has_struct() { rng.random_range(2..=8) } else { 0 },
                num_classes: rng.random_range(2..=5),
                dropout: 0.3,
                gin_epsilon: 0.1 * i as f64,
                ..ModelConfig::default()
            };
            let g = generate_synthetic(
                SyntheticKind::ErdosRenyi { edge_prob: 0.5 },
                rng.random_range(4..=12),
                FeatureMode::Constant,
                50 + i as u64,
            )
            .unwrap();
            let measured = measured_forward_flops(&cfg, &g).map_err(|e| e.to_string())?;
            let analytic = analytic_forward_flops(&cfg, g.num_nodes(), g.num_edges());
            ensure!(
                measured == analytic,
                "config {i} ({}): measured {measured} != analytic {analytic}",
                variant.name()
            );
        }
        Ok(())
    })());
}

// --------------------------------------------------------------- 10 --

#[test]
fn parallel_and_sequential_runs_are_byte_identical() {
    report("parallel_and_sequential_runs_are_byte_identical", (|| {
        let tmp = tempfile::tempdir().unwrap();
        let recipe = |seed: u64| {
            serde_json::json!({
                "type": "synthetic",
                "recipe": {
                    "name": format!("toy{seed}"),
                    "seed": seed,
                    "groups": [
                        {"kind": "cycle", "count": 8, "min_nodes": 5, "max_nodes": 9,
                         "feature_mode": "degree", "label": 0},
                        {"kind": "star", "count": 8, "min_nodes": 5, "max_nodes": 9,
                         "feature_mode": "degree", "label": 1}
                    ]
                }
            })
        };
        let cfg = serde_json::json!({
            "federation": {
                "num_clients": 3,
                "rounds": 3,
                "batch_size": 4,
                "strategy": "feddense",
                "model": {"variant": "ddc", "num_layers": 2, "hidden": 6, "dropout": 0.3},
                "seed": 21
            },
            "clients": [recipe(1), recipe(2), recipe(3)],
            "encoding": {"degree_dim": 4, "rwpe_dim": 4},
            "output_dir": tmp.path().join("seq"),
            "repetitions": 2,
            "split_fractions": {"train": 0.6, "val": 0.2, "test": 0.2}
        });
        let config_path = tmp.path().join("config.json");
        fs::write(&config_path, cfg.to_string()).unwrap();

        let run = |extra: &[&str], out: &std::path::Path| {
            let output = std::process::Command::new(env!("CARGO_BIN_EXE_feddense"))
                .arg("run")
                .arg(&config_path)
                .arg("--out")
                .arg(out)
                .args(extra)
                .output()
                .expect("binary runs");
            assert!(
                output.status.success(),
                "stderr: {}",
                String::from_utf8_lossy(&output.stderr)
            );
        };
        run(&[], &tmp.path().join("seq"));
        run(&["--parallel-clients"], &tmp.path().join("par"));

        for rep in 0..2 {
            let name = format!("metrics_feddense_rep{rep}.csv");
            let seq = fs::read(tmp.path().join("seq").join(&name)).unwrap();
            let par = fs::read(tmp.path().join("par").join(&name)).unwrap();
            ensure!(
                seq == par,
                "{name}: sequential and parallel runs differ ({} vs {} bytes)",
                seq.len(),
                par.len()
            );
            ensure!(!seq.is_empty(), "{name} is empty");
        }
        let seq = fs::read(tmp.path().join("seq").join("summary.json")).unwrap();
        let par = fs::read(tmp.path().join("par").join("summary.json")).unwrap();
        ensure!(
            seq == par,
            "summaries differ between sequential and parallel runs"
        );
        Ok(())
    })());
}

//! End-to-end behaviour of pretraining, fine-tuning and the grid search.

use sdanet::autoencoder::{train_da, CorruptionSpec};
use sdanet::data::{Dataset, SplitTag};
use sdanet::exec::Exec;
use sdanet::linalg::Rng;
use sdanet::nn::{ActivationKind, SgdConfig};
use sdanet::sda::{
    evaluate_with, pretrain, run_pipeline, unroll, Budget, CorruptionMode, FinetuneConfig, PipelineConfig, StackSpec,
};
use sdanet::search::{run_grid, select_best, GridSpec, TrialStatus};

fn bars() -> Dataset {
    Dataset::bars(240, 8, 3).unwrap().split((0.6, 0.2, 0.2), 1).unwrap()
}

fn stack(hidden: Vec<usize>, act: ActivationKind, mode: CorruptionMode) -> StackSpec {
    StackSpec {
        input_dim: 8,
        hidden_dims: hidden,
        hidden_activation: act,
        n_classes: 8,
        corruption: CorruptionSpec { level: 0.3, seed: 17 },
        corruption_mode: mode,
    }
}

fn sgd(lr: f64, batch: usize, epochs: usize, seed: u64) -> SgdConfig {
    SgdConfig {
        learning_rate: lr,
        batch_size: batch,
        epochs,
        seed,
    }
}

fn pipeline_config() -> PipelineConfig {
    PipelineConfig {
        stack: stack(vec![6, 5], ActivationKind::Sigmoid, CorruptionMode::EveryLayer),
        pretrain: sgd(0.1, 4, 5, 2),
        finetune: FinetuneConfig {
            sgd: sgd(0.3, 4, 8, 3),
            patience: 3,
            min_delta: 1e-4,
        },
        pretrain_enabled: true,
        init_seed: 4,
    }
}

#[test]
fn pipeline_is_deterministic() {
    let data = bars();
    let a = run_pipeline(&pipeline_config(), &data, &Budget::unlimited()).unwrap();
    let b = run_pipeline(&pipeline_config(), &data, &Budget::unlimited()).unwrap();
    assert_eq!(a.stack, b.stack);
    assert_eq!(a.finetune.net, b.finetune.net);
    assert_eq!(a.finetune.history, b.finetune.history);
    assert_eq!(a.valid, b.valid);
    assert_eq!(a.test, b.test);
    assert!(a.finetune.epochs_ran() <= 8);
    assert_eq!(a.finetune.history.len(), a.finetune.epochs_ran());
}

#[test]
fn single_layer_pretrain_is_one_da_training_run() {
    let data = bars();
    let train = data.subset(SplitTag::Train);
    let spec = stack(vec![5], ActivationKind::Sigmoid, CorruptionMode::EveryLayer);
    let cfg = sgd(0.1, 5, 6, 9);
    let stacked = pretrain(&spec, &train.samples, &cfg).unwrap();
    let (da, trace) = train_da(
        &spec.initial_da(0, &cfg).unwrap(),
        &train.samples,
        &spec.layer_sgd(0, &cfg),
    )
    .unwrap();
    assert_eq!(stacked.das, vec![da]);
    assert_eq!(stacked.traces, vec![trace]);
}

#[test]
fn bars_reconstruction_loss_decreases() {
    let data = Dataset::bars(256, 8, 0).unwrap();
    let spec = stack(vec![4], ActivationKind::Sigmoid, CorruptionMode::EveryLayer);
    let out = pretrain(&spec, data.samples(), &sgd(0.01, 20, 200, 0)).unwrap();
    let trace = &out.traces[0];
    assert_eq!(trace.len(), 200);
    assert!(trace[199] < trace[0], "{} -> {}", trace[0], trace[199]);
    // Later windows are never worse than the first.
    let window = |r: std::ops::Range<usize>| trace[r].iter().sum::<f64>() / 20.0;
    assert!(window(180..200) < window(0..20));
}

#[test]
fn weights_stay_tied_through_training() {
    let data = Dataset::bars(100, 8, 5).unwrap();
    let spec = stack(vec![4], ActivationKind::Sigmoid, CorruptionMode::EveryLayer);
    // 100 samples in batches of 1 for 10 epochs: 1000 updates.
    let out = pretrain(&spec, data.samples(), &sgd(0.05, 1, 10, 1)).unwrap();
    let da = &out.das[0];
    assert!(da.is_tied());
    assert_eq!(da.decoder_weights(), da.encoder.weights.transpose());
    let initial = spec.initial_da(0, &sgd(0.05, 1, 10, 1)).unwrap();
    assert_ne!(initial.encoder.weights, da.encoder.weights);
}

#[test]
fn first_layer_only_mode_changes_only_deeper_layers() {
    let data = bars();
    let train = data.subset(SplitTag::Train);
    let cfg = sgd(0.1, 4, 3, 8);
    let every = pretrain(
        &stack(vec![6, 5], ActivationKind::Tanh, CorruptionMode::EveryLayer),
        &train.samples,
        &cfg,
    )
    .unwrap();
    let first = pretrain(
        &stack(vec![6, 5], ActivationKind::Tanh, CorruptionMode::FirstLayerOnly),
        &train.samples,
        &cfg,
    )
    .unwrap();
    assert_eq!(every.das[0], first.das[0]);
    assert_ne!(every.das[1], first.das[1]);
    assert_eq!(first.das[1].corruption.level, 0.0);
    assert_eq!(every.das[1].corruption.level, 0.3);
}

#[test]
fn unrolled_net_reuses_encoder_weights() {
    let data = bars();
    let spec = stack(vec![6, 5], ActivationKind::Relu, CorruptionMode::EveryLayer);
    let out = pretrain(&spec, &data.subset(SplitTag::Train).samples, &sgd(0.01, 4, 2, 1)).unwrap();
    let net = unroll(&out.das, &spec, &mut Rng::new(0)).unwrap();
    assert_eq!(net.layers().len(), 3);
    for (layer, da) in net.layers().iter().zip(&out.das) {
        assert_eq!(layer.weights, da.encoder.weights);
        assert_eq!(layer.bias, da.encoder.bias);
    }
    assert_eq!(net.layers()[2].weights.rows(), 8);
    assert_eq!(net.n_classes(), 8);
}

#[test]
fn sequential_and_parallel_evaluation_agree() {
    let data = bars();
    let out = run_pipeline(&pipeline_config(), &data, &Budget::unlimited()).unwrap();
    let valid = data.subset(SplitTag::Valid);
    let seq = evaluate_with(&out.finetune.net, &valid, Exec::Sequential).unwrap();
    let par = evaluate_with(&out.finetune.net, &valid, Exec::Parallel).unwrap();
    assert_eq!(seq, par);
    assert_eq!(seq.total, valid.len());
    let row_sums: Vec<usize> = seq.confusion.iter().map(|r| r.iter().sum()).collect();
    for (c, sum) in row_sums.iter().enumerate() {
        assert_eq!(*sum, valid.labels.iter().filter(|&&l| l == c).count());
    }
}

fn grid(activations: Vec<ActivationKind>, layers: Vec<usize>) -> GridSpec {
    GridSpec {
        activations,
        layer_counts: layers,
        neuron_counts: vec![6],
        corruption_levels: vec![0.3],
        corruption_modes: vec![CorruptionMode::EveryLayer],
        seeds: vec![7],
        pretrain: sgd(0.1, 4, 2, 0),
        finetune: FinetuneConfig {
            sgd: sgd(0.3, 4, 3, 0),
            patience: 2,
            min_delta: 0.0,
        },
        budget_s: None,
    }
}

#[test]
fn one_cell_grid_matches_a_direct_pipeline_run() {
    let data = bars();
    let spec = grid(vec![ActivationKind::Sigmoid], vec![2]);
    let ledger = run_grid(&spec, &data, 1).unwrap();
    assert_eq!(ledger.len(), 1);
    let cell = &ledger[0].cell;
    let direct = run_pipeline(&cell.pipeline(&spec, 8, 8), &data, &Budget::unlimited()).unwrap();
    assert_eq!(ledger[0].status, TrialStatus::Ok);
    assert_eq!(ledger[0].validation_error_pct, Some(direct.valid.error_pct()));
    assert_eq!(ledger[0].test_error_pct, direct.test.map(|t| t.error_pct()));
    assert_eq!(ledger[0].epochs_ran, direct.finetune.epochs_ran());
}

#[test]
fn grid_ledger_is_independent_of_worker_count() {
    let data = bars();
    let spec = grid(vec![ActivationKind::Sigmoid, ActivationKind::Relu], vec![1, 2]);
    let one = run_grid(&spec, &data, 1).unwrap();
    let four = run_grid(&spec, &data, 4).unwrap();
    assert_eq!(one, four);
    assert_eq!(one.len(), 4);
    assert_eq!(select_best(&one).unwrap(), select_best(&four).unwrap());
    let order: Vec<(ActivationKind, usize)> = one.iter().map(|t| (t.cell.activation, t.cell.n_layers)).collect();
    let mut sorted = order.clone();
    sorted.sort();
    assert_eq!(order, sorted);
}

#[test]
fn exhausted_budget_is_recorded_not_fatal() {
    let data = bars();
    let mut spec = grid(vec![ActivationKind::Sigmoid], vec![1]);
    spec.budget_s = Some(1e-9);
    spec.pretrain.epochs = 50;
    let ledger = run_grid(&spec, &data, 1).unwrap();
    assert_eq!(ledger[0].status, TrialStatus::BudgetExceeded);
    assert_eq!(ledger[0].validation_error_pct, None);
    assert!(select_best(&ledger).is_err());
}

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use meshgrow::features::{apply_normalization, assemble_features_with, fit_normalization, FeatureOptions};
use meshgrow::mesh::Mesh;
use meshgrow::nn::{weighted_cross_entropy, Adam, EdgeMesh, Mode, ModelConfig, Network};
use meshgrow::synth::{generate_shape, mean_curvedness, SynthConfig};
use meshgrow::train::{kfold_split, run_experiment, ClassWeights, Label, Sample, SplitMode, TrainConfig};

fn small_config(channels: usize) -> ModelConfig {
    ModelConfig {
        conv_channels: vec![8, 8, 16, 16],
        fc_hidden: 16,
        ..ModelConfig::uia(channels)
    }
}

fn shape(label: Label, seed: u64) -> Mesh {
    generate_shape(label, &SynthConfig::default(), seed).unwrap().mesh
}

/// Same surface with vertices renumbered and faces reordered and rotated.
fn relabel(mesh: &Mesh, rng: &mut ChaCha8Rng) -> Mesh {
    let mut perm: Vec<usize> = (0..mesh.vertex_count()).collect();
    perm.shuffle(rng);
    let mut vertices = vec![[0.0; 3]; perm.len()];
    for (old, &new) in perm.iter().enumerate() {
        vertices[new] = mesh.vertex(old);
    }
    let mut faces: Vec<[usize; 3]> = mesh
        .faces()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let f = [perm[f[0]], perm[f[1]], perm[f[2]]];
            match i % 3 {
                0 => f,
                1 => [f[1], f[2], f[0]],
                _ => [f[2], f[0], f[1]],
            }
        })
        .collect();
    faces.shuffle(rng);
    Mesh::new(vertices, faces).unwrap()
}

#[test]
fn logits_ignore_vertex_and_edge_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let net = Network::new(ModelConfig::uia(7), &mut rng).unwrap();
    let opts = FeatureOptions::default();
    for i in 0..5 {
        let mesh = shape(if i % 2 == 0 { Label::Stable } else { Label::Growing }, 300 + i);
        let other = relabel(&mesh, &mut rng);
        let run = |m: &Mesh| {
            let x = assemble_features_with(m, &opts).unwrap();
            let em = EdgeMesh::new(m.clone()).unwrap();
            let (l, _) = net.forward(&[(&em, &x)], Mode::Eval).unwrap();
            l
        };
        let (a, b) = (run(&mesh), run(&other));
        let diff = a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9, "mesh {i}: logits differ by {diff}");
    }
}

#[test]
fn loss_decreases_on_a_fixed_batch() {
    let meshes: Vec<EdgeMesh> = [(Label::Stable, 1), (Label::Growing, 2), (Label::Stable, 3), (Label::Growing, 4)]
        .iter()
        .map(|&(l, s)| EdgeMesh::new(shape(l, s)).unwrap())
        .collect();
    let raw: Vec<Array2<f64>> = meshes
        .iter()
        .map(|m| assemble_features_with(&m.mesh, &FeatureOptions::default()).unwrap())
        .collect();
    let stats = fit_normalization(&raw).unwrap();
    let x: Vec<Array2<f64>> = raw.iter().map(|f| apply_normalization(f, &stats).unwrap()).collect();
    let batch: Vec<(&EdgeMesh, &Array2<f64>)> = meshes.iter().zip(&x).collect();
    let labels = [0, 1, 0, 1];
    let weights = ClassWeights::default().as_array();

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut net = Network::new(small_config(7), &mut rng).unwrap();
    let mut adam = Adam::new(net.params.len(), 1e-3);
    let mut losses = Vec::new();
    for _ in 0..50 {
        let (l, tape) = net.forward(&batch, Mode::Train).unwrap();
        let (loss, dl) = weighted_cross_entropy(l.view(), &labels, &weights);
        losses.push(loss);
        let g = net.backward(&tape, dl.view()).unwrap();
        adam.update(&mut net.params, &g);
        net.update_running_stats(&tape);
    }
    let first = losses[..5].iter().sum::<f64>() / 5.0;
    let last = losses[45..].iter().sum::<f64>() / 5.0;
    assert!(last < 0.5 * first, "loss {first} -> {last}");
}

#[test]
fn growing_variant_is_more_curved() {
    let cfg = SynthConfig::default();
    let higher = (0..50u64)
        .filter(|&s| {
            let stable = mean_curvedness(&shape(Label::Stable, 7000 + s)).unwrap();
            let growing = mean_curvedness(&generate_shape(Label::Growing, &cfg, 7000 + s).unwrap().mesh).unwrap();
            growing > stable
        })
        .count();
    assert!(higher >= 45, "{higher}/50 pairs");
}

fn dataset(n: usize) -> Vec<Sample> {
    (0..n)
        .map(|i| {
            let label = if i % 3 == 0 { Label::Growing } else { Label::Stable };
            let mesh = EdgeMesh::new(shape(label, 900 + i as u64)).unwrap();
            let features = assemble_features_with(&mesh.mesh, &FeatureOptions::default()).unwrap();
            Sample {
                mesh_path: format!("s{i}.obj").into(),
                label,
                group_id: None,
                mesh,
                features,
            }
        })
        .collect()
}

#[test]
fn experiments_are_reproducible_across_thread_counts() {
    let samples = dataset(12);
    let labels: Vec<Label> = samples.iter().map(|s| s.label).collect();
    let split = kfold_split(&labels, &[], 3, 1, SplitMode::Stratified).unwrap();
    let mut cfg = TrainConfig::new(small_config(7));
    cfg.batch_size = 8;
    cfg.max_epochs = 10;
    cfg.seed = 3;
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_experiment("m", &cfg, FeatureOptions::default(), &samples, &split).unwrap())
    };
    let (a, b) = (run(1), run(3));
    let json = |r: &meshgrow::train::ExperimentResult| serde_json::to_string(&r.report).unwrap();
    assert_eq!(json(&a), json(&b));
    for (fa, fb) in a.folds.iter().zip(&b.folds) {
        assert_eq!(fa.checkpoint.network.params, fb.checkpoint.network.params);
        assert_eq!(fa.history, fb.history);
    }
}

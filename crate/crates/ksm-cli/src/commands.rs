//! The three run modes: train, compare, analyze.

use std::collections::HashMap;

use ksm::analysis::{self, ApproxReport, ClassifierEval};
use ksm::baselines::{
    self, LandmarkSet, KMEANS_LANDMARK_ITERS,
};
use ksm::checkpoint;
use ksm::data::{load_idx_images, make_half_moons, Dataset};
use ksm::error::{KsmError, Result};
use ksm::{Kernel, ModelState};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{Config, DatasetSection};
use crate::output::RunContext;

fn build_dataset(section: &DatasetSection) -> Result<Dataset> {
    match section.source.as_str() {
        "half_moons" => make_half_moons(
            section.count.expect("validated: half_moons has count"),
            section.noise_std.expect("validated: half_moons has noise_std"),
            section.seed,
        ),
        "idx" => {
            let images = section.images.as_ref().expect("validated: idx has images");
            let dataset = load_idx_images(images, section.labels.as_deref(), section.crop)?;
            match section.subsample {
                Some(count) => dataset.subsample(count, section.subsample_seed),
                None => Ok(dataset),
            }
        }
        other => unreachable!("validated at parse time: dataset source {other:?}"),
    }
}

/// The seeds that shaped a trained model: the data seed, then the training
/// seed. Recorded as the checkpoint's seed history.
fn seed_history(section: &DatasetSection, train_seed: u64) -> Vec<u64> {
    let data_seed = match section.source.as_str() {
        "half_moons" => section.seed,
        _ => section.subsample_seed,
    };
    vec![data_seed, train_seed]
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

pub fn cmd_train(config: &Config, ctx: &RunContext) -> Result<()> {
    let dataset = build_dataset(&config.dataset)?;
    let training = config.training()?;
    let train_config = training.to_train_config(config.model.lambda)?;
    let n = config.model.n()?;
    let kernel = config.kernel;
    println!(
        "training {} (N={n}, {} samples, {} phase(s))",
        kernel.label(),
        dataset.len(),
        train_config.phases.len()
    );

    let mut boundary_states: Vec<ModelState> = Vec::new();
    let observer = |_phase: usize, state: &ModelState| boundary_states.push(state.clone());
    let (state, log) = if training.homogeneous {
        ksm::train::train_homogeneous_observed(&dataset, kernel, n, &train_config, observer)?
    } else {
        ksm::train::train_observed(&dataset, kernel, n, &train_config, observer)?
    };

    let provenance = ctx.provenance();
    let seeds = seed_history(&config.dataset, train_config.seed);
    for (phase, boundary) in boundary_states.iter().enumerate() {
        let path = ctx.dir.join(format!("checkpoint_phase{phase}.json"));
        checkpoint::save_with_provenance(boundary, &seeds, Some(&provenance), &path)?;
    }
    let final_path = ctx.dir.join("checkpoint.json");
    checkpoint::save_with_provenance(&state, &seeds, Some(&provenance), &final_path)?;

    // The trained dictionary doubles as a landmark set for Nyström use.
    let landmarks = LandmarkSet::from_model(&state);
    checkpoint::save_landmarks_with_provenance(
        &landmarks,
        Some(&provenance),
        &ctx.dir.join("landmarks.json"),
    )?;

    let mut body = Vec::new();
    log.to_csv(&mut body).map_err(KsmError::Io)?;
    ctx.write_tagged_csv(&ctx.dir.join("trainlog.csv"), &body)?;

    let last = log.records.last().expect("training logs its last iteration");
    println!(
        "done: mean energy {:.6} at iteration {}; wrote {}",
        last.mean_energy,
        last.iter,
        final_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

pub fn cmd_compare(config: &Config, ctx: &RunContext) -> Result<()> {
    let compare = config.compare()?;
    let kernel = config.kernel;

    let rff_sigma = match kernel {
        Kernel::Gaussian { sigma } => Some(sigma),
        _ => None,
    };
    if compare.methods.iter().any(|m| m == "rff") && rff_sigma.is_none() {
        return Err(KsmError::InvalidArgument(format!(
            "compare method \"rff\" requires the gaussian kernel, got {}",
            kernel.label()
        )));
    }

    let dataset = build_dataset(&config.dataset)?;
    let f = kernel.gram(&dataset.x);

    let mut methods = compare.methods.clone();
    methods.sort();
    let mut dims = compare.dims.clone();
    dims.sort_unstable();
    let mut seeds = compare.seeds.clone();
    seeds.sort_unstable();

    // hebbian and nystrom_learned share one trained model per (dim, seed);
    // the sweep seed offsets the configured training seed.
    let trained: HashMap<(usize, u64), ModelState> = if compare.needs_training() {
        let training = config.training()?;
        let base = training.to_train_config(config.model.lambda)?;
        let homogeneous = training.homogeneous;
        let cells: Vec<(usize, u64)> = dims
            .iter()
            .flat_map(|&dim| seeds.iter().map(move |&seed| (dim, seed)))
            .collect();
        println!(
            "training {} model(s) ({} dim(s) x {} seed(s))",
            cells.len(),
            dims.len(),
            seeds.len()
        );
        cells
            .into_par_iter()
            .map(|(dim, seed)| {
                let mut cell = base.clone();
                cell.seed = base.seed.wrapping_add(seed);
                let (state, _) = if homogeneous {
                    ksm::train::train_homogeneous(&dataset, kernel, dim, &cell)?
                } else {
                    ksm::train::train(&dataset, kernel, dim, &cell)?
                };
                Ok(((dim, seed), state))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .collect()
    } else {
        HashMap::new()
    };

    // Kernel PCA is seed-free; compute once per dim.
    let kpca: HashMap<usize, f64> = if methods.iter().any(|m| m == "kernel_pca") {
        dims.par_iter()
            .map(|&dim| Ok((dim, analysis::nrmse(&f, &baselines::kernel_pca_features(&f, dim)?)?)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .collect()
    } else {
        HashMap::new()
    };

    let specs: Vec<(&str, usize, u64)> = methods
        .iter()
        .flat_map(|m| {
            let dims = &dims;
            let seeds = &seeds;
            dims.iter().flat_map(move |&dim| {
                seeds.iter().map(move |&seed| (m.as_str(), dim, seed))
            })
        })
        .collect();

    let reports: Vec<ApproxReport> = specs
        .par_iter()
        .map(|&(method, dim, seed)| {
            let x = &dataset.x;
            let value = match method {
                "hebbian" => {
                    let state = &trained[&(dim, seed)];
                    analysis::nrmse(&f, &state.response_closed_form(x)?.y)?
                }
                "nystrom_learned" => {
                    let landmarks = LandmarkSet::from_model(&trained[&(dim, seed)]);
                    analysis::nrmse(&f, &baselines::nystrom_features(kernel, x, &landmarks)?)?
                }
                "nystrom_uniform" => {
                    let landmarks = baselines::select_landmarks_uniform(x, dim, seed)?;
                    analysis::nrmse(&f, &baselines::nystrom_features(kernel, x, &landmarks)?)?
                }
                "nystrom_kmeans" => {
                    let landmarks =
                        baselines::select_landmarks_kmeans(x, dim, seed, KMEANS_LANDMARK_ITERS)?;
                    analysis::nrmse(&f, &baselines::nystrom_features(kernel, x, &landmarks)?)?
                }
                "rff" => {
                    let sigma = rff_sigma.expect("checked above");
                    analysis::nrmse(&f, &baselines::random_fourier_features(sigma, x, dim, seed)?)?
                }
                "kernel_pca" => kpca[&dim],
                other => unreachable!("validated at parse time: method {other:?}"),
            };
            Ok(ApproxReport {
                method: method.to_string(),
                dim,
                nrmse: value,
                seed,
                dataset: dataset.name.clone(),
                kernel,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut body = Vec::new();
    analysis::reports_to_csv(&reports, &mut body).map_err(KsmError::Io)?;
    let path = ctx.reports_dir()?.join("compare.csv");
    ctx.write_tagged_csv(&path, &body)?;
    println!("wrote {} rows to {}", reports.len(), path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

fn classifier_json(eval: &ClassifierEval) -> serde_json::Value {
    json!({
        "labels_per_class": eval.labels_per_class,
        "train_accuracy": eval.train_accuracy,
        "test_accuracy": eval.test_accuracy,
        "per_seed": eval.per_seed.iter().map(|s| json!({
            "seed": s.seed,
            "weight_decay": s.weight_decay,
            "train_accuracy": s.train_accuracy,
            "test_accuracy": s.test_accuracy,
        })).collect::<Vec<_>>(),
    })
}

fn require_labels<'a>(dataset: &'a Dataset, task: &str) -> Result<&'a [u32]> {
    dataset.labels.as_deref().ok_or_else(|| {
        KsmError::InvalidArgument(format!(
            "analyze task {task:?} needs labels, but dataset {} has none",
            dataset.name
        ))
    })
}

pub fn cmd_analyze(config: &Config, ctx: &RunContext) -> Result<()> {
    let analyze = config.analyze()?;
    let dataset = build_dataset(&config.dataset)?;
    let loaded = checkpoint::load(&analyze.checkpoint)?;
    let state = loaded.state;
    if state.m() != dataset.dim() {
        return Err(KsmError::DimensionMismatch {
            context: "checkpoint input dim vs dataset dim".to_string(),
            left: state.m(),
            right: dataset.dim(),
        });
    }
    if state.kernel != config.kernel {
        return Err(KsmError::InvalidArgument(format!(
            "config kernel {} disagrees with checkpoint kernel {}",
            config.kernel.label(),
            state.kernel.label()
        )));
    }

    println!(
        "analyzing {} (N={}) on {} ({} samples)",
        analyze.checkpoint.display(),
        state.n(),
        dataset.name,
        dataset.len()
    );
    let y = state.response_closed_form(&dataset.x)?.y;
    let reports = ctx.reports_dir()?;

    for task in &analyze.tasks {
        match task.as_str() {
            "spectrum" => {
                let f = state.kernel.gram(&dataset.x);
                let mut body = Vec::new();
                analysis::spectrum_to_csv(&analysis::spectrum(&f)?, &mut body)
                    .map_err(KsmError::Io)?;
                ctx.write_tagged_csv(&reports.join("spectrum_input.csv"), &body)?;

                let yyt = &y * y.transpose();
                let mut body = Vec::new();
                analysis::spectrum_to_csv(&analysis::spectrum(&yyt)?, &mut body)
                    .map_err(KsmError::Io)?;
                ctx.write_tagged_csv(&reports.join("spectrum_responses.csv"), &body)?;
                println!("spectrum: wrote input and response spectra");
            }
            "cluster" => {
                let labels = require_labels(&dataset, task)?;
                let section = analyze.cluster.as_ref().expect("validated at parse time");
                let (on_responses, _) =
                    analysis::kmeans_cluster_eval(&y, labels, section.k, section.n_init, section.seed)?;
                let (on_inputs, _) = analysis::kmeans_cluster_eval(
                    &dataset.x,
                    labels,
                    section.k,
                    section.n_init,
                    section.seed,
                )?;
                ctx.write_json(
                    &ctx.dir.join("cluster.json"),
                    json!({
                        "k": section.k,
                        "n_init": section.n_init,
                        "cluster_seed": section.seed,
                        "accuracy_responses": on_responses,
                        "accuracy_inputs": on_inputs,
                    }),
                )?;
                println!(
                    "cluster: accuracy {on_responses:.4} on responses, {on_inputs:.4} on inputs"
                );
            }
            "rfields" => {
                let fields = analysis::linearized_responses(&dataset.x, &y)?;
                let mut body = Vec::new();
                {
                    use std::io::Write as _;
                    let header: Vec<String> =
                        (0..fields.ncols()).map(|j| format!("x{j}")).collect();
                    writeln!(body, "unit,{}", header.join(",")).map_err(KsmError::Io)?;
                    for i in 0..fields.nrows() {
                        let row: Vec<String> =
                            fields.row(i).iter().map(|v| v.to_string()).collect();
                        writeln!(body, "{i},{}", row.join(",")).map_err(KsmError::Io)?;
                    }
                }
                ctx.write_tagged_csv(&reports.join("rfields.csv"), &body)?;
                println!("rfields: wrote {} linearized filters", fields.nrows());
            }
            "histogram" => {
                let (_, y_fixed) = analysis::fix_sign_degeneracy(&state, &y);
                let histogram = analysis::response_histogram(&y_fixed, analyze.bins)?;
                let mut body = Vec::new();
                histogram.to_csv(&mut body).map_err(KsmError::Io)?;
                ctx.write_tagged_csv(&reports.join("histogram.csv"), &body)?;
                ctx.write_json(
                    &ctx.dir.join("histogram.json"),
                    json!({
                        "bins": analyze.bins,
                        "excess_kurtosis": histogram.excess_kurtosis,
                    }),
                )?;
                println!("histogram: excess kurtosis {:.4}", histogram.excess_kurtosis);
            }
            "classify" => {
                require_labels(&dataset, task)?;
                let section = analyze.classify.as_ref().expect("validated at parse time");
                let (train_set, test_set) =
                    dataset.split(section.test_fraction, section.split_seed)?;
                let labels_train = train_set.labels.as_deref().expect("parent has labels");
                let labels_test = test_set.labels.as_deref().expect("parent has labels");
                let ytrain = state.response_closed_form(&train_set.x)?.y;
                let ytest = state.response_closed_form(&test_set.x)?.y;
                let mut results = Vec::new();
                for &per_class in &section.labels_per_class {
                    let features = analysis::linear_classifier_eval(
                        &ytrain,
                        labels_train,
                        &ytest,
                        labels_test,
                        per_class,
                        &section.weight_decays,
                        &section.seeds,
                    )?;
                    let raw = analysis::linear_classifier_eval(
                        &train_set.x,
                        labels_train,
                        &test_set.x,
                        labels_test,
                        per_class,
                        &section.weight_decays,
                        &section.seeds,
                    )?;
                    println!(
                        "classify: {per_class} labels/class -> test accuracy {:.4} on responses, {:.4} on inputs",
                        features.test_accuracy, raw.test_accuracy
                    );
                    results.push(json!({
                        "labels_per_class": per_class,
                        "responses": classifier_json(&features),
                        "inputs": classifier_json(&raw),
                    }));
                }
                ctx.write_json(
                    &ctx.dir.join("classify.json"),
                    json!({
                        "test_fraction": section.test_fraction,
                        "split_seed": section.split_seed,
                        "results": results,
                    }),
                )?;
            }
            other => unreachable!("validated at parse time: task {other:?}"),
        }
    }
    Ok(())
}

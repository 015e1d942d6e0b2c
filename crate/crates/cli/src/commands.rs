use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use jaca::{
    cross_validate, estimation_correlation, load_views_with_classes, misclassification_rate,
    precision_recall, sample_dataset, sum_correlation, train, view_pairs, write_labels, write_view,
    CVSummary, Dataset, Model, TrainConfig, Truth,
};
use serde::Serialize;

use crate::config::{load_simulation, RunConfig};
use crate::failure::Failure;

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))
}

fn create_file(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn open_file(path: &Path) -> Result<File, Failure> {
    File::open(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn with_context(path: &Path) -> impl Fn(jaca::JacaError) -> Failure + '_ {
    move |e| match Failure::from(e) {
        Failure::Io(m) => Failure::Io(format!("{}: {m}", path.display())),
        other => other,
    }
}

fn output_dir(flag: Option<&Path>, cfg: Option<&Path>) -> PathBuf {
    flag.or(cfg).map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

pub fn simulate(config: &Path, output: Option<&Path>, seed: Option<u64>) -> Result<(), Failure> {
    let mut cfg = load_simulation(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let dir = output_dir(output, None);
    let sim = sample_dataset::<f64>(&cfg)?;
    create_dir(&dir)?;
    for d in 0..sim.train.n_views() {
        let path = dir.join(format!("view{}.csv", d + 1));
        write_view(&path, &sim.train, d).map_err(with_context(&path))?;
    }
    let labels = dir.join("labels.csv");
    write_labels(&labels, &sim.train).map_err(with_context(&labels))?;
    if let Some(test) = &sim.test {
        for d in 0..test.n_views() {
            let path = dir.join(format!("test_view{}.csv", d + 1));
            write_view(&path, test, d).map_err(with_context(&path))?;
        }
        let path = dir.join("test_labels.csv");
        write_labels(&path, test).map_err(with_context(&path))?;
    }
    let truth_path = dir.join("truth.json");
    let mut w = create_file(&truth_path)?;
    sim.truth.write_json(&mut w).map_err(with_context(&truth_path))?;
    w.flush()?;

    println!(
        "simulated n = {} ({} labeled, {} unlabeled), test n = {}",
        sim.train.n_subjects(),
        cfg.n_labeled,
        cfg.n_unlabeled,
        cfg.n_test
    );
    println!("p = {:?}, K = {}, q = {}", cfg.p, cfg.n_classes, cfg.q());
    for (d, l) in view_pairs(sim.truth.n_views()) {
        println!(
            "class canonical correlations, views {} and {}: {:?}",
            d + 1,
            l + 1,
            sim.truth.class_correlations(d, l)
        );
    }
    if cfg.q() > 0 {
        println!("extra factor canonical correlations: {:?}", cfg.extra_corrs);
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn load_training(cfg: &RunConfig) -> Result<Dataset, Failure> {
    let labels = cfg.labels.as_deref().expect("validated config has labels");
    let ds: Dataset = load_views_with_classes(&cfg.views, Some(labels), None)?;
    let ds = if cfg.semi_supervised { ds } else { ds.complete_cases() };
    ds.check_trainable()?;
    Ok(ds)
}

fn run_cv(cfg: &RunConfig, ds: &Dataset, dir: &Path) -> Result<jaca::CVResult<f64>, Failure> {
    let cv_cfg = cfg.cv_config();
    let result = cross_validate(ds, &cv_cfg)?;
    create_dir(dir)?;
    let report = dir.join("cv_report.csv");
    jaca::select::write_cv_report(&report, &result).map_err(with_context(&report))?;
    let summary = dir.join("cv_summary.json");
    CVSummary::new(&result, cv_cfg.alpha)
        .write(&summary)
        .map_err(with_context(&summary))?;
    println!(
        "selected rho = {}, epsilon = {} (criterion {})",
        result.best_rho, result.best_epsilon, result.best_criterion
    );
    Ok(result)
}

fn apply_seed(mut cfg: RunConfig, seed: Option<u64>) -> RunConfig {
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg
}

pub fn cv(config: &Path, output: Option<&Path>, seed: Option<u64>) -> Result<(), Failure> {
    let cfg = apply_seed(RunConfig::load(config)?, seed);
    let dir = output_dir(output, cfg.output_dir.as_deref());
    let ds = load_training(&cfg)?;
    run_cv(&cfg, &ds, &dir)?;
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn fit(config: &Path, output: Option<&Path>, seed: Option<u64>) -> Result<(), Failure> {
    let cfg = apply_seed(RunConfig::load(config)?, seed);
    let dir = output_dir(output, cfg.output_dir.as_deref());
    let ds = load_training(&cfg)?;
    let train_cfg = if cfg.is_fixed() {
        TrainConfig {
            tol: cfg.tol,
            max_iter: cfg.max_iter,
            ..TrainConfig::new(cfg.alpha, cfg.rho.unwrap(), cfg.epsilon.unwrap())
        }
    } else {
        let result = run_cv(&cfg, &ds, &dir)?;
        TrainConfig::from_cv(&result, cfg.alpha, cfg.tol, cfg.max_iter)
    };
    let model = train(&ds, &train_cfg)?;
    create_dir(&dir)?;
    let path = dir.join("model.json");
    let mut w = create_file(&path)?;
    model.write_json(&mut w).map_err(with_context(&path))?;
    w.flush()?;
    let raw = model.raw_coefficients();
    println!(
        "fit on {} subjects: converged = {}, iterations = {}, kkt residual = {:e}",
        ds.n_subjects(),
        model.convergence.converged,
        model.convergence.iterations,
        model.convergence.kkt_residual
    );
    println!(
        "cardinality per view: {:?}",
        (0..raw.n_views()).map(|d| raw.cardinality(d)).collect::<Vec<_>>()
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn load_model(path: &Path) -> Result<Model, Failure> {
    Model::read_json(open_file(path)?).map_err(|e| match e {
        jaca::JacaError::Json(j) if !j.is_io() => Failure::Data(format!("{}: {j}", path.display())),
        other => with_context(path)(other),
    })
}

/// Parses a 1-based view list into sorted 0-based indices.
pub fn parse_views(list: Option<&[usize]>, n_views: usize) -> Result<Vec<usize>, Failure> {
    let Some(list) = list else {
        return Ok((0..n_views).collect());
    };
    let mut views: Vec<usize> = Vec::with_capacity(list.len());
    for &v in list {
        if v == 0 || v > n_views {
            return Err(Failure::Usage(format!("view {v} outside 1..={n_views}")));
        }
        views.push(v - 1);
    }
    views.sort_unstable();
    views.dedup();
    if views.is_empty() {
        return Err(Failure::Usage("no views selected".into()));
    }
    Ok(views)
}

fn load_data(model: &Model, data: &[PathBuf], labels: Option<&Path>) -> Result<Dataset, Failure> {
    if data.len() != model.n_views() {
        return Err(Failure::Usage(format!(
            "model has {} views but {} data files were given",
            model.n_views(),
            data.len()
        )));
    }
    let ds: Dataset = load_views_with_classes(data, labels, Some(model.n_classes))?;
    for d in 0..ds.n_views() {
        if ds.feature_names(d) != model.feature_names[d].as_slice() {
            return Err(Failure::Data(format!(
                "view {} columns do not match the model's features",
                d + 1
            )));
        }
    }
    Ok(ds)
}

pub fn predict(
    model_path: &Path,
    data: &[PathBuf],
    views: Option<&[usize]>,
    output: Option<&Path>,
) -> Result<(), Failure> {
    let model = load_model(model_path)?;
    let views = parse_views(views, model.n_views())?;
    let ds = load_data(&model, data, None)?;
    let prediction = model.predict(&ds, &views)?;
    let sink: Box<dyn Write> = match output {
        Some(dir) => {
            create_dir(dir)?;
            Box::new(create_file(&dir.join("predictions.csv"))?)
        }
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["id".to_string(), "predicted_label".to_string()];
    header.extend((1..=model.n_classes).map(|k| format!("score_{k}")));
    w.write_record(&header)?;
    for (i, id) in ds.subject_ids().iter().enumerate() {
        let mut row = vec![id.clone(), (prediction.labels[i] + 1).to_string()];
        row.extend(prediction.discriminants.row(i).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SubsetError {
    views: Vec<usize>,
    n: usize,
    misclassification: f64,
}

#[derive(Serialize)]
struct TruthMetrics {
    sum_correlation: f64,
    estimation_correlation: Vec<f64>,
    precision: Vec<f64>,
    recall: Vec<f64>,
}

#[derive(Serialize)]
struct Metrics {
    converged: bool,
    cardinality: Vec<usize>,
    total_cardinality: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    misclassification: Vec<SubsetError>,
    #[serde(skip_serializing_if = "Option::is_none")]
    predictions: Option<SubsetError>,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth: Option<TruthMetrics>,
}

fn read_column_pairs(path: &Path, value_col: &str) -> Result<Vec<(String, String)>, Failure> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open_file(path)?);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            Failure::Data(format!("{}: missing `{name}` column", path.display()))
        })
    };
    let (id, value) = (find("id")?, find(value_col)?);
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        out.push((
            record.get(id).unwrap_or("").to_string(),
            record.get(value).unwrap_or("").to_string(),
        ));
    }
    Ok(out)
}

fn prediction_error(predictions: &Path, labels: &Path, n_classes: usize) -> Result<SubsetError, Failure> {
    let parse = |path: &Path, id: &str, v: &str| -> Result<usize, Failure> {
        match v.parse::<usize>() {
            Ok(k) if (1..=n_classes).contains(&k) => Ok(k),
            _ => Err(Failure::Data(format!(
                "{}: subject `{id}` has label `{v}`, expected 1..={n_classes}",
                path.display()
            ))),
        }
    };
    let truth: HashMap<String, String> = read_column_pairs(labels, "label")?.into_iter().collect();
    let mut predicted = Vec::new();
    let mut actual = Vec::new();
    for (id, p) in read_column_pairs(predictions, "predicted_label")? {
        let Some(t) = truth.get(&id).filter(|t| !t.is_empty()) else {
            continue;
        };
        predicted.push(parse(predictions, &id, &p)?);
        actual.push(parse(labels, &id, t)?);
    }
    if actual.is_empty() {
        return Err(Failure::Data("no predicted subject has a label".into()));
    }
    Ok(SubsetError {
        views: Vec::new(),
        n: actual.len(),
        misclassification: misclassification_rate(&predicted, &actual)?,
    })
}

pub struct EvaluateArgs<'a> {
    pub model: &'a Path,
    pub data: &'a [PathBuf],
    pub labels: Option<&'a Path>,
    pub predictions: Option<&'a Path>,
    pub truth: Option<&'a Path>,
    pub output: Option<&'a Path>,
}

pub fn evaluate(args: &EvaluateArgs<'_>) -> Result<(), Failure> {
    let model = load_model(args.model)?;
    let raw = model.raw_coefficients();
    let cardinality: Vec<usize> = (0..raw.n_views()).map(|d| raw.cardinality(d)).collect();
    let mut metrics = Metrics {
        converged: model.convergence.converged,
        total_cardinality: cardinality.iter().sum(),
        cardinality,
        misclassification: Vec::new(),
        predictions: None,
        truth: None,
    };
    if !args.data.is_empty() {
        let labels = args
            .labels
            .ok_or_else(|| Failure::Usage("--data needs --labels to score predictions".into()))?;
        let ds = load_data(&model, args.data, Some(labels))?;
        for clf in &model.classifiers {
            let rows: Vec<usize> = (0..ds.n_subjects())
                .filter(|&i| ds.label(i).is_some() && clf.views.iter().all(|&d| ds.is_present(i, d)))
                .collect();
            if rows.is_empty() {
                continue;
            }
            let sub = ds.subset(&rows);
            let truth: Vec<usize> = rows.iter().map(|&i| ds.label(i).unwrap()).collect();
            let predicted = model.predict(&sub, &clf.views)?.labels;
            metrics.misclassification.push(SubsetError {
                views: clf.views.iter().map(|d| d + 1).collect(),
                n: rows.len(),
                misclassification: misclassification_rate(&predicted, &truth)?,
            });
        }
    }
    if let Some(pred) = args.predictions {
        let labels = args
            .labels
            .ok_or_else(|| Failure::Usage("--predictions needs --labels".into()))?;
        metrics.predictions = Some(prediction_error(pred, labels, model.n_classes)?);
    }
    if let Some(path) = args.truth {
        let truth = Truth::read_json(open_file(path)?).map_err(with_context(path))?;
        if truth.config.p != raw.dims() || truth.n_classes() != model.n_classes {
            return Err(Failure::Data(format!(
                "{}: truth dimensions do not match the model",
                path.display()
            )));
        }
        let (precision, recall) = (0..raw.n_views())
            .map(|d| precision_recall(raw.block(d), &truth.support[d]))
            .unzip();
        metrics.truth = Some(TruthMetrics {
            sum_correlation: sum_correlation(&raw, &truth),
            estimation_correlation: (0..raw.n_views())
                .map(|d| estimation_correlation(raw.block(d), &truth, d))
                .collect(),
            precision,
            recall,
        });
    }
    let text = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    match args.output {
        Some(dir) => {
            create_dir(dir)?;
            let mut w = create_file(&dir.join("metrics.json"))?;
            writeln!(w, "{text}")?;
            w.flush()?;
        }
        None => writeln!(io::stdout().lock(), "{text}")?,
    }
    Ok(())
}

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use facedesc::descriptor::{extract_paths, DescriptorMatrix, DescriptorVariant, MatrixRecord};
use facedesc::evaluation::{
    reports_to_csv, reports_to_pivot_csv, run_experiment, DatasetManifest, ExperimentOptions, MetricsReport,
    RecordSource,
};
use facedesc::network::{load_weights, NetworkSpec, WeightStore};
use facedesc::selftest::{self, Fault};
use facedesc::Error;

use crate::config::{ExperimentConfig, OutputFormat};
use crate::CliError;

pub fn describe_model(model: Option<&Path>) -> Result<(), CliError> {
    let spec = match model {
        Some(path) => load_weights(path)?.0,
        None => NetworkSpec::vgg_face(),
    };
    print!("{}", spec.describe()?);
    Ok(())
}

pub fn selftest(fault: Option<Fault>) -> Result<(), CliError> {
    let outcomes = selftest::run(fault);
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name).collect();
    for o in &outcomes {
        println!("{o}");
    }
    println!("{}/{} checks passed", outcomes.len() - failed.len(), outcomes.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Core(Error::Internal(format!("self-test failed: {}", failed.join(", ")))))
    }
}

/// Images listed in a manifest, with paths resolved against the manifest's
/// directory.
struct ImageList {
    sources: Vec<String>,
    paths: Vec<PathBuf>,
    subjects: Vec<String>,
}

fn image_list(manifest_path: &Path) -> Result<ImageList, CliError> {
    let manifest = load_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new(""));
    let mut list = ImageList {
        sources: Vec::new(),
        paths: Vec::new(),
        subjects: Vec::new(),
    };
    for (i, r) in manifest.records.into_iter().enumerate() {
        let RecordSource::Path(p) = r.source else {
            return Err(CliError::Usage(format!(
                "manifest record {i} names a descriptor row; extraction needs image paths"
            )));
        };
        list.paths.push(base.join(&p));
        list.sources.push(p);
        list.subjects.push(r.subject);
    }
    Ok(list)
}

fn load_manifest(path: &Path) -> Result<DatasetManifest, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Core(Error::Io { path: path.into(), source: e }))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(Error::from)?;
    if manifest.records.is_empty() {
        return Err(CliError::Usage(format!("manifest {} is empty", path.display())));
    }
    Ok(manifest)
}

fn load_model(config: &ExperimentConfig) -> Result<(NetworkSpec, WeightStore), CliError> {
    let path = config
        .model
        .as_deref()
        .ok_or_else(|| CliError::Usage("--model is required".into()))?;
    let (spec, weights) = load_weights(path)?;
    weights.validate_against(&spec)?;
    Ok((spec, weights))
}

/// One descriptor matrix per variant, built from the images that decoded.
fn extract_matrices(
    spec: &NetworkSpec,
    weights: &WeightStore,
    variants: &[DescriptorVariant],
    images: &ImageList,
    skip_errors: bool,
) -> Result<Vec<DescriptorMatrix>, CliError> {
    for v in variants {
        v.validate_for(spec)?;
    }
    let started = Instant::now();
    let results = extract_paths(spec, weights, variants, &images.paths);
    let mut kept = Vec::new();
    let mut first_error = None;
    for (i, result) in results.into_iter().enumerate() {
        match result {
            Ok(descriptors) => kept.push((i, descriptors)),
            Err(e) => {
                log::error!("{}: {e}", images.paths[i].display());
                first_error.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_error {
        if !skip_errors {
            return Err(e.into());
        }
        log::warn!("skipped {} of {} images", images.paths.len() - kept.len(), images.paths.len());
    }
    if kept.is_empty() {
        return Err(CliError::Core(Error::InvalidArgument("no image could be described".into())));
    }
    eprintln!(
        "extracted {} images x {} variants in {:.3}s",
        kept.len(),
        variants.len(),
        started.elapsed().as_secs_f64()
    );

    variants
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let records = kept
                .iter()
                .enumerate()
                .map(|(row, (i, _))| MatrixRecord {
                    row,
                    source: images.sources[*i].clone(),
                    subject: Some(images.subjects[*i].clone()),
                })
                .collect();
            let rows: Vec<&[f32]> = kept.iter().map(|(_, d)| d[k].as_slice()).collect();
            Ok(DescriptorMatrix::from_rows(&v.name, records, &rows)?)
        })
        .collect()
}

pub fn extract(config: &ExperimentConfig) -> Result<(), CliError> {
    let variants = config.parsed_variants()?;
    let out_dir = config
        .output
        .as_deref()
        .ok_or_else(|| CliError::Usage("--output <DIR> is required".into()))?;
    let images = image_list(config.manifest_path()?)?;
    let (spec, weights) = load_model(config)?;
    let matrices = extract_matrices(&spec, &weights, &variants, &images, config.skip_errors)?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Core(Error::Io { path: out_dir.into(), source: e }))?;
    for m in &matrices {
        m.save(out_dir)?;
        log::info!("wrote {}", DescriptorMatrix::matrix_path(out_dir, &m.sidecar.variant).display());
    }
    Ok(())
}

/// Subject labels and rows of `matrix` selected by the manifest, or every
/// row with its sidecar subject when there is no manifest.
fn select_rows<'m>(
    matrix: &'m DescriptorMatrix,
    manifest: Option<&DatasetManifest>,
) -> Result<(Vec<String>, Vec<&'m [f32]>), CliError> {
    let variant = &matrix.sidecar.variant;
    let Some(manifest) = manifest else {
        let mut labels = Vec::with_capacity(matrix.rows());
        for r in &matrix.sidecar.records {
            let subject = r.subject.clone().ok_or_else(|| {
                CliError::Usage(format!("{variant}: row {} has no subject; pass --manifest", r.row))
            })?;
            labels.push(subject);
        }
        return Ok((labels, matrix.row_slices()));
    };
    if manifest.records.len() != matrix.rows() {
        return Err(CliError::Core(Error::Validation {
            layer: variant.clone(),
            expected: format!("{} descriptor rows to match the manifest", manifest.records.len()),
            found: format!("{} rows", matrix.rows()),
        }));
    }
    let by_source: HashMap<&str, usize> =
        matrix.sidecar.records.iter().map(|r| (r.source.as_str(), r.row)).collect();
    let mut labels = Vec::with_capacity(manifest.records.len());
    let mut rows = Vec::with_capacity(manifest.records.len());
    for r in &manifest.records {
        let row = match &r.source {
            RecordSource::Descriptor(row) if *row < matrix.rows() => *row,
            RecordSource::Descriptor(row) => {
                return Err(CliError::Core(Error::Validation {
                    layer: variant.clone(),
                    expected: format!("row below {}", matrix.rows()),
                    found: format!("row {row}"),
                }))
            }
            RecordSource::Path(p) => *by_source.get(p.as_str()).ok_or_else(|| Error::Validation {
                layer: variant.clone(),
                expected: format!("a descriptor row for `{p}`"),
                found: "none".into(),
            })?,
        };
        labels.push(r.subject.clone());
        rows.push(matrix.row(row));
    }
    Ok((labels, rows))
}

pub fn evaluate(config: &ExperimentConfig) -> Result<(), CliError> {
    let variants = config.parsed_variants()?;
    let distances = config.distance_kinds();
    let cutoffs = config.cutoff_list()?;
    let format = config.format.unwrap_or_default();
    if config.pivot && format == OutputFormat::Json {
        return Err(CliError::Usage("--pivot applies to csv output only".into()));
    }

    let matrices = match (&config.descriptors, &config.model) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give either --descriptors or --model, not both".into())),
        (None, None) => return Err(CliError::Usage("--descriptors <DIR> or --model is required".into())),
        (Some(dir), None) => variants
            .iter()
            .map(|v| DescriptorMatrix::load(dir, &v.name))
            .collect::<Result<Vec<_>, _>>()?,
        (None, Some(_)) => {
            let images = image_list(config.manifest_path()?)?;
            let (spec, weights) = load_model(config)?;
            extract_matrices(&spec, &weights, &variants, &images, config.skip_errors)?
        }
    };
    // Inline extraction already applied the manifest and may have dropped
    // failed images, so rows are used as extracted.
    let manifest = match (&config.descriptors, &config.manifest) {
        (Some(_), Some(path)) => Some(load_manifest(path)?),
        _ => None,
    };

    let started = Instant::now();
    let mut reports: Vec<MetricsReport> = Vec::new();
    for m in &matrices {
        let (labels, rows) = select_rows(m, manifest.as_ref())?;
        let labels: Vec<&str> = labels.iter().map(String::as_str).collect();
        for &distance in &distances {
            let options = ExperimentOptions {
                variant: m.sidecar.variant.clone(),
                distance,
                cutoffs: cutoffs.clone(),
                anmrr_windowed: config.anmrr_window,
            };
            let report = run_experiment(&labels, &rows, &options)?;
            if report.degenerate {
                log::warn!(
                    "{} / {distance}: ties at a cutoff boundary in {} queries",
                    report.variant,
                    report.tie_affected_queries
                );
            }
            reports.push(report);
        }
    }
    eprintln!(
        "evaluated {} reports over {} queries each in {:.3}s",
        reports.len(),
        reports.first().map_or(0, |r| r.queries),
        started.elapsed().as_secs_f64()
    );

    let text = match format {
        OutputFormat::Csv if config.pivot => reports_to_pivot_csv(&reports),
        OutputFormat::Csv => reports_to_csv(&reports),
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(&reports).map_err(Error::from)?;
            s.push('\n');
            s
        }
    };
    write_output(config.output.as_deref(), &text)
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| CliError::Core(Error::Io { path: path.into(), source: e }))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|()| out.flush())
                .map_err(|e| CliError::Core(Error::Io { path: "<stdout>".into(), source: e }))
        }
    }
}

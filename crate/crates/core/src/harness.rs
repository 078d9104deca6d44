//! Experiment harness: simulated test-set generation, per-case metric rows,
//! per-method aggregates and report files (CSV, JSON summary, SVG figures).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::craniectomy::{random_craniectomy, CraniectomySpec, VcConfig};
use crate::error::{Error, Result};
use crate::figures;
use crate::grid::SkullMask;
use crate::metrics::{dice, hausdorff_mm};
use crate::reconstruction::{FlapEstimate, PcaModel};
use crate::rng::derive_seed;

/// One simulated (or ingested) evaluation case with its ground truth.
#[derive(Debug, Clone)]
pub struct EvalCase {
    pub case_id: String,
    pub skull_id: String,
    pub defect: SkullMask,
    pub true_flap: SkullMask,
    pub spec: Option<CraniectomySpec>,
}

/// Manifest record for one simulated case (JSON-lines on disk).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub skull_id: String,
    pub seed: u64,
    pub center_vox: [usize; 3],
    pub radius_vox: f64,
    pub flap_volume_cm3: f64,
}

/// A simulated test set plus its reproducibility manifest.
#[derive(Debug)]
pub struct TestSet {
    pub cases: Vec<EvalCase>,
    pub records: Vec<CaseRecord>,
    /// Cases skipped because the simulation failed after retries.
    pub failures: usize,
}

/// Draw `n_per_skull` seeded virtual craniectomies from every test skull.
/// Failed draws are logged and skipped, not fatal.
pub fn simulate_test_set(
    skulls: &[(String, SkullMask)],
    n_per_skull: usize,
    vc: &VcConfig,
    seed: u64,
) -> Result<TestSet> {
    let mut cases = Vec::with_capacity(skulls.len() * n_per_skull);
    let mut records = Vec::with_capacity(skulls.len() * n_per_skull);
    let mut failures = 0usize;
    for (si, (skull_id, skull)) in skulls.iter().enumerate() {
        for j in 0..n_per_skull {
            let case_seed = derive_seed(seed, "test-set", &[si as u64, j as u64]);
            match random_craniectomy(skull, vc, case_seed) {
                Ok(sample) => {
                    let case_id = format!("{skull_id}_vc{j:03}");
                    records.push(CaseRecord {
                        case_id: case_id.clone(),
                        skull_id: skull_id.clone(),
                        seed: case_seed,
                        center_vox: sample.spec.center_vox,
                        radius_vox: sample.spec.radius_vox,
                        flap_volume_cm3: sample.flap.volume_cm3(),
                    });
                    cases.push(EvalCase {
                        case_id,
                        skull_id: skull_id.clone(),
                        defect: sample.defect,
                        true_flap: sample.flap,
                        spec: Some(sample.spec),
                    });
                }
                Err(Error::SimulationFailed { .. }) => failures += 1,
                Err(other) => return Err(other),
            }
        }
    }
    Ok(TestSet {
        cases,
        records,
        failures,
    })
}

pub fn write_case_manifest(path: impl AsRef<Path>, records: &[CaseRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_case_manifest(path: impl AsRef<Path>) -> Result<Vec<CaseRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// A flap reconstruction method under evaluation.
///
/// `predict` receives the whole case so that test fixtures (oracle, empty)
/// can be expressed; honest methods must only look at `case.defect`. One
/// inference may yield several post-processing variants, each reported as
/// its own row.
pub trait FlapPredictor {
    fn name(&self) -> String;
    fn predict(&self, case: &EvalCase) -> Result<Vec<FlapEstimate>>;
}

/// RS-PCA predictor over a fitted shape model.
pub struct PcaPredictor {
    pub model: PcaModel,
    /// Largest-component post-processing variants to report (one row each).
    pub largest_component_variants: Vec<bool>,
}

impl FlapPredictor for PcaPredictor {
    fn name(&self) -> String {
        "RS-PCA".into()
    }

    fn predict(&self, case: &EvalCase) -> Result<Vec<FlapEstimate>> {
        let recon = self.model.reconstruct_mask(&case.defect)?;
        self.largest_component_variants
            .iter()
            .map(|&lc| {
                crate::reconstruction::subtract_reconstruction(
                    &recon,
                    &case.defect,
                    crate::reconstruction::Method::RsPca,
                    lc,
                )
            })
            .collect()
    }
}

impl PcaPredictor {
    pub fn new(model: PcaModel) -> Self {
        Self {
            model,
            largest_component_variants: vec![true],
        }
    }
}

/// Network-backed predictor (DE or RS, per the checkpoint's strategy).
#[cfg(feature = "torch")]
pub struct NetPredictor {
    pub model: crate::reconstruction::TrainedNet,
    /// For RS models: largest-component variants to report. Ignored for DE
    /// (the paper applies no post-processing to direct estimates).
    pub largest_component_variants: Vec<bool>,
}

#[cfg(feature = "torch")]
impl NetPredictor {
    /// Paper defaults: DE reports the raw estimate, RS applies
    /// largest-component cleanup.
    pub fn new(model: crate::reconstruction::TrainedNet) -> Self {
        let variants = match model.strategy() {
            crate::training::TrainStrategy::DirectEstimation => vec![false],
            crate::training::TrainStrategy::ReconstructSubtract => vec![true],
        };
        Self {
            model,
            largest_component_variants: variants,
        }
    }
}

#[cfg(feature = "torch")]
impl FlapPredictor for NetPredictor {
    fn name(&self) -> String {
        self.model
            .method()
            .map(|m| m.to_string())
            .unwrap_or_else(|_| "NET".into())
    }

    fn predict(&self, case: &EvalCase) -> Result<Vec<FlapEstimate>> {
        use crate::training::TrainStrategy;
        match self.model.strategy() {
            TrainStrategy::DirectEstimation => Ok(vec![crate::reconstruction::estimate_flap_de(
                &self.model,
                &case.defect,
            )?]),
            TrainStrategy::ReconstructSubtract => {
                let recon =
                    crate::reconstruction::reconstruct_full_rs_net(&self.model, &case.defect)?;
                let method = self.model.method()?;
                self.largest_component_variants
                    .iter()
                    .map(|&lc| {
                        crate::reconstruction::subtract_reconstruction(
                            &recon,
                            &case.defect,
                            method,
                            lc,
                        )
                    })
                    .collect()
            }
        }
    }
}

/// Test fixture: returns the ground truth (upper bound, dice 1.0).
pub struct OraclePredictor;

impl FlapPredictor for OraclePredictor {
    fn name(&self) -> String {
        "ORACLE".into()
    }

    fn predict(&self, case: &EvalCase) -> Result<Vec<FlapEstimate>> {
        Ok(vec![FlapEstimate::new(
            case.true_flap.clone(),
            crate::reconstruction::Method::DeUnet,
            Default::default(),
        )])
    }
}

/// Test fixture: always predicts an empty flap (lower bound, dice 0.0).
pub struct EmptyPredictor;

impl FlapPredictor for EmptyPredictor {
    fn name(&self) -> String {
        "EMPTY".into()
    }

    fn predict(&self, case: &EvalCase) -> Result<Vec<FlapEstimate>> {
        Ok(vec![FlapEstimate::new(
            SkullMask::zeros(case.defect.geom().clone()),
            crate::reconstruction::Method::DeUnet,
            Default::default(),
        )])
    }
}

/// One metrics row. Distances are missing (not errors) when a prediction is
/// empty; failed predictions produce a row with an error status.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub case_id: String,
    pub skull_id: String,
    pub method: String,
    pub postproc: String,
    pub status: String,
    pub dice: Option<f64>,
    pub hausdorff_mm: Option<f64>,
    pub hd95_mm: Option<f64>,
    pub predicted_volume_cm3: Option<f64>,
    pub true_volume_cm3: f64,
    pub volume_abs_error_cm3: Option<f64>,
}

/// Aggregates over the ok-rows of one (method, postproc) group.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub postproc: String,
    pub cases_ok: usize,
    pub cases_error: usize,
    pub mean_dice: f64,
    pub median_dice: f64,
    pub mean_hausdorff_mm: Option<f64>,
    pub mean_hd95_mm: Option<f64>,
    pub mean_volume_abs_error_cm3: f64,
    pub median_volume_abs_error_cm3: f64,
}

#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub rows: Vec<MetricsReport>,
    pub summaries: Vec<MethodSummary>,
}

fn metric_row(case: &EvalCase, method: &str, est: &FlapEstimate) -> MetricsReport {
    let d = dice(&est.mask, &case.true_flap).ok();
    let hd = hausdorff_mm(&est.mask, &case.true_flap).ok();
    let true_volume = case.true_flap.volume_cm3();
    MetricsReport {
        case_id: case.case_id.clone(),
        skull_id: case.skull_id.clone(),
        method: method.to_string(),
        postproc: est.postproc.to_string(),
        status: "ok".into(),
        dice: d,
        hausdorff_mm: hd.map(|h| h.hd_mm),
        hd95_mm: hd.map(|h| h.hd95_mm),
        predicted_volume_cm3: Some(est.volume_cm3),
        true_volume_cm3: true_volume,
        volume_abs_error_cm3: Some((est.volume_cm3 - true_volume).abs()),
    }
}

fn error_row(case: &EvalCase, method: &str, err: &Error) -> MetricsReport {
    MetricsReport {
        case_id: case.case_id.clone(),
        skull_id: case.skull_id.clone(),
        method: method.to_string(),
        postproc: String::new(),
        status: format!("error: {err}"),
        dice: None,
        hausdorff_mm: None,
        hd95_mm: None,
        predicted_volume_cm3: None,
        true_volume_cm3: case.true_flap.volume_cm3(),
        volume_abs_error_cm3: None,
    }
}

fn median(sorted: &mut Vec<f64>) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Run every predictor on every case. Per-case failures become error rows;
/// the run continues. Rows are sorted by (case, method, postproc) so the
/// report is independent of execution order.
pub fn evaluate(predictors: &[&dyn FlapPredictor], cases: &[EvalCase]) -> EvalReport {
    let mut rows: Vec<MetricsReport> = Vec::with_capacity(cases.len() * predictors.len());
    for case in cases {
        for p in predictors {
            let name = p.name();
            match p.predict(case) {
                Ok(estimates) => {
                    for est in &estimates {
                        rows.push(metric_row(case, &name, est));
                    }
                }
                Err(err) => rows.push(error_row(case, &name, &err)),
            }
        }
    }
    rows.sort_by(|a, b| {
        (&a.case_id, &a.method, &a.postproc).cmp(&(&b.case_id, &b.method, &b.postproc))
    });

    let mut groups: BTreeMap<(String, String), Vec<&MetricsReport>> = BTreeMap::new();
    for row in &rows {
        groups
            .entry((row.method.clone(), row.postproc.clone()))
            .or_default()
            .push(row);
    }
    let summaries = groups
        .into_iter()
        .map(|((method, postproc), rows)| {
            let ok: Vec<_> = rows.iter().filter(|r| r.status == "ok").collect();
            let mut dices: Vec<f64> = ok.iter().filter_map(|r| r.dice).collect();
            let mean_dice = dices.iter().sum::<f64>() / dices.len().max(1) as f64;
            let hds: Vec<f64> = ok.iter().filter_map(|r| r.hausdorff_mm).collect();
            let hd95s: Vec<f64> = ok.iter().filter_map(|r| r.hd95_mm).collect();
            let mut verrs: Vec<f64> = ok.iter().filter_map(|r| r.volume_abs_error_cm3).collect();
            let mean_verr = verrs.iter().sum::<f64>() / verrs.len().max(1) as f64;
            MethodSummary {
                method,
                postproc,
                cases_ok: ok.len(),
                cases_error: rows.len() - ok.len(),
                mean_dice,
                median_dice: median(&mut dices),
                mean_hausdorff_mm: (!hds.is_empty())
                    .then(|| hds.iter().sum::<f64>() / hds.len() as f64),
                mean_hd95_mm: (!hd95s.is_empty())
                    .then(|| hd95s.iter().sum::<f64>() / hd95s.len() as f64),
                mean_volume_abs_error_cm3: mean_verr,
                median_volume_abs_error_cm3: median(&mut verrs),
            }
        })
        .collect();

    EvalReport { rows, summaries }
}

/// Write `metrics.csv`, `summary.json` and figure files into `dir`.
pub fn write_report(dir: impl AsRef<Path>, report: &EvalReport) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;

    let mut w = csv::Writer::from_path(dir.join("metrics.csv"))?;
    for row in &report.rows {
        w.serialize(row)?;
    }
    w.flush()?;

    serde_json::to_writer_pretty(
        std::fs::File::create(dir.join("summary.json"))?,
        &report.summaries,
    )?;

    // Figures over groups, in summary order.
    let group_label = |m: &str, p: &str| {
        if p == "largest-component" {
            format!("{m}+lc")
        } else {
            m.to_string()
        }
    };
    let mut dice_groups = Vec::new();
    let mut hd_groups = Vec::new();
    let mut scatter = Vec::new();
    for s in &report.summaries {
        let label = group_label(&s.method, &s.postproc);
        let rows: Vec<&MetricsReport> = report
            .rows
            .iter()
            .filter(|r| r.method == s.method && r.postproc == s.postproc && r.status == "ok")
            .collect();
        dice_groups.push((
            label.clone(),
            rows.iter().filter_map(|r| r.dice).collect::<Vec<_>>(),
        ));
        hd_groups.push((
            label.clone(),
            rows.iter().filter_map(|r| r.hausdorff_mm).collect::<Vec<_>>(),
        ));
        scatter.push((
            label,
            rows.iter()
                .filter_map(|r| r.predicted_volume_cm3.map(|p| (p, r.true_volume_cm3)))
                .collect::<Vec<_>>(),
        ));
    }
    std::fs::write(
        dir.join("dice_boxplot.svg"),
        figures::boxplot_svg("Flap reconstruction overlap", "Dice coefficient", &dice_groups),
    )?;
    std::fs::write(
        dir.join("hausdorff_boxplot.svg"),
        figures::boxplot_svg("Flap surface distance", "Hausdorff distance (mm)", &hd_groups),
    )?;
    std::fs::write(
        dir.join("volume_scatter.svg"),
        figures::scatter_svg(
            "Bone flap volume estimation",
            "predicted volume (cm3)",
            "true volume (cm3)",
            &scatter,
        ),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridGeom;
    use crate::phantoms::{generate_cohort, PhantomParams};

    fn tiny_cohort(n: usize) -> Vec<(String, SkullMask)> {
        let params = PhantomParams {
            dims: [48, 48, 48],
            semi_axes_mm: [
                crate::phantoms::ParamRange { min: 30.0, max: 34.0 },
                crate::phantoms::ParamRange { min: 36.0, max: 40.0 },
                crate::phantoms::ParamRange { min: 30.0, max: 34.0 },
            ],
            ..Default::default()
        };
        generate_cohort(&params, n, 5)
            .unwrap()
            .into_iter()
            .map(|p| (p.id, p.mask))
            .collect()
    }

    #[test]
    fn test_set_counts_and_determinism() {
        let skulls = tiny_cohort(3);
        let vc = VcConfig::default();
        let a = simulate_test_set(&skulls, 4, &vc, 11).unwrap();
        assert_eq!(a.cases.len() + a.failures, 12);
        let b = simulate_test_set(&skulls, 4, &vc, 11).unwrap();
        assert_eq!(a.records, b.records);

        let none = simulate_test_set(&skulls, 0, &vc, 11).unwrap();
        assert!(none.cases.is_empty());
    }

    #[test]
    fn manifest_round_trips() {
        let skulls = tiny_cohort(2);
        let set = simulate_test_set(&skulls, 3, &VcConfig::default(), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cases.jsonl");
        write_case_manifest(&path, &set.records).unwrap();
        let back = read_case_manifest(&path).unwrap();
        assert_eq!(back, set.records);
    }

    #[test]
    fn oracle_scores_perfectly_and_empty_scores_zero() {
        let skulls = tiny_cohort(2);
        let set = simulate_test_set(&skulls, 3, &VcConfig::default(), 2).unwrap();
        let report = evaluate(&[&OraclePredictor, &EmptyPredictor], &set.cases);

        for row in &report.rows {
            match row.method.as_str() {
                "ORACLE" => {
                    assert_eq!(row.dice, Some(1.0));
                    assert_eq!(row.hausdorff_mm, Some(0.0));
                    assert_eq!(row.volume_abs_error_cm3, Some(0.0));
                }
                "EMPTY" => {
                    assert_eq!(row.dice, Some(0.0));
                    // Distance undefined against an empty prediction.
                    assert_eq!(row.hausdorff_mm, None);
                    assert_eq!(row.volume_abs_error_cm3, Some(row.true_volume_cm3));
                }
                other => panic!("unexpected method {other}"),
            }
        }
    }

    #[test]
    fn report_files_are_written_and_deterministic() {
        let skulls = tiny_cohort(2);
        let set = simulate_test_set(&skulls, 2, &VcConfig::default(), 3).unwrap();
        let report = evaluate(&[&OraclePredictor], &set.cases);
        let dir = tempfile::tempdir().unwrap();
        write_report(dir.path(), &report).unwrap();
        let csv1 = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert!(csv1.contains("ORACLE"));
        assert!(dir.path().join("summary.json").exists());
        assert!(dir.path().join("volume_scatter.svg").exists());

        let report2 = evaluate(&[&OraclePredictor], &set.cases);
        let dir2 = tempfile::tempdir().unwrap();
        write_report(dir2.path(), &report2).unwrap();
        let csv2 = std::fs::read_to_string(dir2.path().join("metrics.csv")).unwrap();
        assert_eq!(csv1, csv2);
    }

    #[test]
    fn failing_predictor_yields_error_rows_and_run_continues() {
        struct Broken;
        impl FlapPredictor for Broken {
            fn name(&self) -> String {
                "BROKEN".into()
            }
            fn predict(&self, _case: &EvalCase) -> Result<Vec<FlapEstimate>> {
                Err(Error::NoForeground)
            }
        }
        let skulls = tiny_cohort(1);
        let set = simulate_test_set(&skulls, 2, &VcConfig::default(), 4).unwrap();
        let report = evaluate(&[&Broken, &OraclePredictor], &set.cases);
        let broken_rows: Vec<_> = report.rows.iter().filter(|r| r.method == "BROKEN").collect();
        assert_eq!(broken_rows.len(), set.cases.len());
        assert!(broken_rows.iter().all(|r| r.status.starts_with("error")));
        let oracle_rows = report.rows.iter().filter(|r| r.method == "ORACLE").count();
        assert_eq!(oracle_rows, set.cases.len());
        let summary = report
            .summaries
            .iter()
            .find(|s| s.method == "BROKEN")
            .unwrap();
        assert_eq!(summary.cases_error, set.cases.len());
    }

    #[test]
    fn grid_is_checked_lazily_not_fatally() {
        // A predictor returning a mask on the wrong grid produces a row with
        // missing metrics rather than aborting the run.
        struct WrongGrid;
        impl FlapPredictor for WrongGrid {
            fn name(&self) -> String {
                "WRONG".into()
            }
            fn predict(&self, _case: &EvalCase) -> Result<Vec<FlapEstimate>> {
                let g = GridGeom::isotropic([8, 8, 8], 1.0).unwrap();
                Ok(vec![FlapEstimate::new(
                    SkullMask::zeros(g),
                    crate::reconstruction::Method::DeUnet,
                    Default::default(),
                )])
            }
        }
        let skulls = tiny_cohort(1);
        let set = simulate_test_set(&skulls, 1, &VcConfig::default(), 5).unwrap();
        let report = evaluate(&[&WrongGrid], &set.cases);
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].dice, None);
    }
}

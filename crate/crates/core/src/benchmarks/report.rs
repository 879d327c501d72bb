//! Benchmark reports, their pass/fail gates and the files that go with
//! them: CSV tables and SVG plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use plotters::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmarks::characterize::Characterization;
use crate::benchmarks::memory::MemoryProbe;
use crate::benchmarks::sinc::{sinc, SincSweep};
use crate::benchmarks::vowels::{VowelBenchmark, VowelClass};
use crate::benchmarks::Mode;
use crate::config::{Gates, TaskKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Gate {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.to_owned(), passed, detail }
    }
}

/// Everything a benchmark run produced except timing, so that equal
/// configurations give byte-identical reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub task: TaskKind,
    pub config_hash: String,
    /// Set when the vowel data came from the built-in synthesiser.
    pub synthetic_data: bool,
    pub metrics: BTreeMap<String, f64>,
    pub gates: Vec<Gate>,
    pub artifacts: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sinc: Option<SincSweep>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vowel: Option<VowelBenchmark>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub memory: Option<MemoryProbe>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub characterize: Option<Characterization>,
}

/// A file to be written next to the report.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn text(name: impl Into<String>, text: String) -> Self {
        Self { name: name.into(), bytes: text.into_bytes() }
    }
}

pub const REPORT_NAME: &str = "report.json";

impl BenchmarkReport {
    fn empty(task: TaskKind, config_hash: &str) -> Self {
        Self {
            task,
            config_hash: config_hash.to_owned(),
            synthetic_data: false,
            metrics: BTreeMap::new(),
            gates: Vec::new(),
            artifacts: Vec::new(),
            sinc: None,
            vowel: None,
            memory: None,
            characterize: None,
        }
    }

    pub fn gates_pass(&self) -> bool {
        self.gates.iter().all(|g| g.passed)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }

    /// The report itself as the last artifact, listing all the others.
    fn finish(mut self, mut artifacts: Vec<Artifact>) -> (Self, Vec<Artifact>) {
        self.artifacts = artifacts.iter().map(|a| a.name.clone()).collect();
        self.artifacts.push(REPORT_NAME.to_owned());
        artifacts.push(Artifact::text(REPORT_NAME, self.to_json()));
        (self, artifacts)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.12e}"))
}

fn plot_err<E: std::fmt::Debug>(e: E) -> Error {
    Error::Plot(format!("{e:?}"))
}

pub fn sinc_report(config_hash: &str, sweep: SincSweep, gates: &Gates) -> Result<(BenchmarkReport, Vec<Artifact>)> {
    let mut report = BenchmarkReport::empty(TaskKind::Sinc, config_hash);
    let linear = sweep.linear.test_rmse.unwrap_or(f64::NAN);
    report.metrics.insert("linear_test_rmse".into(), linear);
    let best = sweep.best().cloned();
    if let Some(b) = &best {
        let rmse = b.test_rmse.unwrap_or(f64::NAN);
        report.metrics.insert("best_exponent".into(), b.exponent.unwrap_or(f64::NAN));
        report.metrics.insert("best_test_rmse".into(), rmse);
        report.metrics.insert("best_ratio_to_linear".into(), rmse / linear);
    }
    report.metrics.insert("unstable_points".into(), sweep.points.iter().filter(|p| p.unstable).count() as f64);
    let best_rmse = best.as_ref().and_then(|b| b.test_rmse);
    if let Some(max) = gates.sinc_max_rmse {
        let passed = best_rmse.is_some_and(|r| r <= max);
        report.gates.push(Gate::new("sinc_max_rmse", passed, format!("best test RMSE {best_rmse:?} <= {max}")));
    }
    if let Some(ratio) = gates.sinc_max_ratio_to_linear {
        let passed = best_rmse.is_some_and(|r| r <= ratio * linear);
        report.gates.push(Gate::new(
            "sinc_max_ratio_to_linear",
            passed,
            format!("best test RMSE {best_rmse:?} <= {ratio} x linear {linear:.4e}"),
        ));
    }
    if gates.sinc_interior_minimum == Some(true) {
        let passed = sweep.has_interior_minimum();
        let at = best.as_ref().and_then(|b| b.exponent);
        report.gates.push(Gate::new("sinc_interior_minimum", passed, format!("minimum at n = {at:?}")));
    }

    let mut curve = String::from("exponent,gain,unstable,train_rmse,test_rmse,lambda\n");
    for p in std::iter::once(&sweep.linear).chain(&sweep.points) {
        let n = p.exponent.map_or_else(|| "linear".to_owned(), |n| format!("{n}"));
        writeln!(
            curve,
            "{n},{:.12e},{},{},{},{}",
            p.gain,
            p.unstable,
            fmt_opt(p.train_rmse),
            fmt_opt(p.test_rmse),
            fmt_opt(p.lambda)
        )
        .unwrap();
    }
    let mut preds = String::from("zeta,target,predicted\n");
    for (z, y) in sweep.test_inputs.iter().zip(&sweep.best_predictions) {
        writeln!(preds, "{z:.12e},{:.12e},{y:.12e}", sinc(*z)).unwrap();
    }
    let artifacts = vec![
        Artifact::text("rmse_curve.csv", curve),
        Artifact::text("rmse_curve.svg", plot_rmse_curve(&sweep)?),
        Artifact::text("predictions.csv", preds),
        Artifact::text("predictions.svg", plot_predictions(&sweep)?),
    ];
    report.sinc = Some(sweep);
    Ok(report.finish(artifacts))
}

pub fn vowel_report(
    config_hash: &str,
    bench: VowelBenchmark,
    gates: &Gates,
) -> Result<(BenchmarkReport, Vec<Artifact>)> {
    let mut report = BenchmarkReport::empty(TaskKind::Vowel, config_hash);
    report.synthetic_data = bench.synthetic;
    for m in &bench.modes {
        report.metrics.insert(format!("accuracy_mean_{}", m.mode.name()), m.mean_accuracy);
        for o in &m.outcomes {
            report.metrics.insert(format!("accuracy_{}_split{}", m.mode.name(), o.split_seed), o.metrics.accuracy);
        }
        if let Some(o) = m.outcomes.first() {
            report.metrics.insert(format!("parameters_{}", m.mode.name()), o.n_parameters as f64);
        }
    }
    let per_seed =
        |mode: Mode| bench.mode(mode).map(|m| m.outcomes.iter().map(|o| o.metrics.accuracy).collect::<Vec<_>>());
    let margin_gate = |name: &str, other: Mode, margin: f64| -> Gate {
        match (per_seed(Mode::Nonlinear), per_seed(other)) {
            (Some(nl), Some(o)) => {
                let diffs: Vec<f64> = nl.iter().zip(&o).map(|(a, b)| 100.0 * (a - b)).collect();
                let passed = !diffs.is_empty() && diffs.iter().all(|d| *d >= margin);
                Gate::new(
                    name,
                    passed,
                    format!("nonlinear minus {} per seed {diffs:.1?} points, need >= {margin}", other.name()),
                )
            }
            _ => Gate::new(name, false, format!("needs nonlinear and {} modes", other.name())),
        }
    };
    if let Some(m) = gates.vowel_margin_over_linear {
        report.gates.push(margin_gate("vowel_margin_over_linear", Mode::Linear, m));
    }
    if let Some(m) = gates.vowel_margin_over_digital {
        report.gates.push(margin_gate("vowel_margin_over_digital", Mode::Digital, m));
    }
    if let Some(max) = gates.vowel_max_parameters {
        let most = bench.modes.iter().flat_map(|m| &m.outcomes).map(|o| o.n_parameters).max().unwrap_or(0);
        report.gates.push(Gate::new(
            "vowel_max_parameters",
            most <= max,
            format!("{most} trainable parameters <= {max}"),
        ));
    }

    let mut artifacts = Vec::new();
    let mut acc = String::from("mode,split_seed,svm_seed,accuracy,n_parameters,train_size,test_size\n");
    for m in &bench.modes {
        for o in &m.outcomes {
            writeln!(
                acc,
                "{},{},{},{:.12e},{},{},{}",
                m.mode.name(),
                o.split_seed,
                o.svm_seed,
                o.metrics.accuracy,
                o.n_parameters,
                o.train_size,
                o.test_size
            )
            .unwrap();
        }
    }
    artifacts.push(Artifact::text("accuracy.csv", acc));
    for m in &bench.modes {
        let mut csv = String::from("split_seed,true_class");
        for c in VowelClass::ALL {
            write!(csv, ",pred_{}", c.name()).unwrap();
        }
        csv.push('\n');
        let mut total = vec![vec![0usize; 3]; 3];
        for o in &m.outcomes {
            for (t, row) in o.metrics.confusion.iter().enumerate() {
                write!(csv, "{},{}", o.split_seed, VowelClass::ALL[t].name()).unwrap();
                for (p, v) in row.iter().enumerate() {
                    write!(csv, ",{v}").unwrap();
                    total[t][p] += v;
                }
                csv.push('\n');
            }
        }
        artifacts.push(Artifact::text(format!("confusion_{}.csv", m.mode.name()), csv));
        artifacts.push(Artifact::text(
            format!("confusion_{}.svg", m.mode.name()),
            plot_confusion(&total, &format!("{} (all seeds)", m.mode.name()))?,
        ));
        if !m.spectra.is_empty() {
            artifacts.push(Artifact::text(
                format!("spectra_{}.svg", m.mode.name()),
                plot_spectra(&m.spectra_hz, &m.spectra, m.mode.name())?,
            ));
        }
    }
    report.vowel = Some(bench);
    Ok(report.finish(artifacts))
}

pub fn memory_report(config_hash: &str, probe: MemoryProbe, gates: &Gates) -> Result<(BenchmarkReport, Vec<Artifact>)> {
    let mut report = BenchmarkReport::empty(TaskKind::Memory, config_hash);
    let rates: Vec<f64> = probe.responses.iter().map(|r| r.decay_rate).collect();
    let mean_rate = rates.iter().sum::<f64>() / rates.len().max(1) as f64;
    let worst = rates.iter().map(|r| (r / probe.expected_rate - 1.0).abs()).fold(0.0, f64::max);
    report.metrics.insert("expected_rate".into(), probe.expected_rate);
    report.metrics.insert("mean_decay_rate".into(), mean_rate);
    report.metrics.insert("max_relative_rate_error".into(), worst);
    report.metrics.insert("max_cross_correlation".into(), probe.max_cross_correlation);
    report
        .metrics
        .insert("non_decaying_probes".into(), probe.responses.iter().filter(|r| r.non_decaying).count() as f64);
    if let Some(tol) = gates.memory_rate_tolerance {
        let passed = !rates.is_empty() && probe.expected_rate > 0.0 && worst <= tol;
        report.gates.push(Gate::new(
            "memory_rate_tolerance",
            passed,
            format!("worst relative rate error {worst:.4} <= {tol} (expected {:.4} 1/s)", probe.expected_rate),
        ));
    }
    if let Some(max) = gates.memory_max_cross_correlation {
        let passed = probe.max_cross_correlation < max;
        report.gates.push(Gate::new(
            "memory_max_cross_correlation",
            passed,
            format!("max normalised cross-correlation {:.4} < {max}", probe.max_cross_correlation),
        ));
    }

    let mut decay =
        String::from("label,distance_m,onset_s,expected_onset_s,decay_rate,decay_time_s,t60_s,non_decaying\n");
    for r in &probe.responses {
        writeln!(
            decay,
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}",
            r.label, r.distance_m, r.onset_s, r.expected_onset_s, r.decay_rate, r.decay_time_s, r.t60_s, r.non_decaying
        )
        .unwrap();
    }
    let stride = probe.record_stride.max(1);
    let records: Vec<crate::wavefield::ProbeRecord> = probe
        .responses
        .iter()
        .map(|r| crate::wavefield::ProbeRecord {
            label: r.label.clone(),
            samples: r.samples.iter().step_by(stride).copied().collect(),
            sample_rate_hz: probe.sample_rate_hz / stride as f64,
        })
        .collect();
    let mut csv = Vec::new();
    crate::io::write_records_csv(&records, &mut csv)?;
    let artifacts = vec![
        Artifact::text("decay.csv", decay),
        Artifact { name: "impulse_responses.csv".into(), bytes: csv },
        Artifact::text("impulse_responses.svg", plot_impulse_responses(&records)?),
    ];
    report.memory = Some(probe);
    Ok(report.finish(artifacts))
}

pub fn characterize_report(
    config_hash: &str,
    ch: Characterization,
    gates: &Gates,
) -> Result<(BenchmarkReport, Vec<Artifact>)> {
    let mut report = BenchmarkReport::empty(TaskKind::Characterize, config_hash);
    report.metrics.insert("stability_bound".into(), ch.bound);
    for p in &ch.points {
        report.metrics.insert(format!("h2_db_at_{}", p.factor), p.phasors.level_db(2));
    }
    if gates.characterize_second_harmonic_monotone == Some(true) {
        let h2 = ch.harmonic_magnitudes(2);
        let passed = h2.windows(2).all(|w| w[1] >= w[0]);
        report.gates.push(Gate::new("characterize_second_harmonic_monotone", passed, format!("|H2| {h2:?}")));
    }
    let mut csv = Vec::new();
    ch.write_csv(&mut csv).map_err(|e| Error::io("phasors.csv", e))?;
    let artifacts =
        vec![Artifact { name: "phasors.csv".into(), bytes: csv }, Artifact::text("phasors.svg", plot_phasors(&ch)?)];
    report.characterize = Some(ch);
    Ok(report.finish(artifacts))
}

const SIZE: (u32, u32) = (720, 480);

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) =
        values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.08 * (hi - lo) } else { 0.5 * lo.abs().max(1e-12) };
    (lo - pad, hi + pad)
}

fn plot_rmse_curve(sweep: &SincSweep) -> Result<String> {
    let pts: Vec<(f64, f64, f64)> =
        sweep.points.iter().filter_map(|p| Some((p.exponent?, p.train_rmse?, p.test_rmse?))).collect();
    let linear = sweep.linear.test_rmse.unwrap_or(f64::NAN);
    let (x0, x1) = bounds(sweep.points.iter().filter_map(|p| p.exponent));
    let (_, y1) = bounds(pts.iter().flat_map(|p| [p.1, p.2]).chain([linear]));
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption("sinc regression: RMSE vs exponent", ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(60)
            .build_cartesian_2d(x0..x1, 0.0..y1)
            .map_err(plot_err)?;
        chart.configure_mesh().x_desc("exponent n").y_desc("RMSE").draw().map_err(plot_err)?;
        chart
            .draw_series(LineSeries::new(pts.iter().map(|p| (p.0, p.2)), &RED))
            .map_err(plot_err)?
            .label("test")
            .legend(|(x, y)| PathElement::new([(x, y), (x + 16, y)], RED));
        chart.draw_series(pts.iter().map(|p| Circle::new((p.0, p.2), 4, RED.filled()))).map_err(plot_err)?;
        chart
            .draw_series(LineSeries::new(pts.iter().map(|p| (p.0, p.1)), &BLUE))
            .map_err(plot_err)?
            .label("train")
            .legend(|(x, y)| PathElement::new([(x, y), (x + 16, y)], BLUE));
        if linear.is_finite() {
            chart
                .draw_series(LineSeries::new([(x0, linear), (x1, linear)], BLACK.mix(0.6)))
                .map_err(plot_err)?
                .label("linear baseline (test)")
                .legend(|(x, y)| PathElement::new([(x, y), (x + 16, y)], BLACK));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

fn plot_predictions(sweep: &SincSweep) -> Result<String> {
    let (lo, hi) = sweep.test_inputs.iter().fold((-1.0f64, 1.0f64), |(a, b), z| (a.min(*z), b.max(*z)));
    let (y0, y1) = bounds(sweep.best_predictions.iter().copied().chain([-0.3, 1.05]));
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption("sinc regression: best exponent, test set", ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(50)
            .build_cartesian_2d(lo..hi, y0..y1)
            .map_err(plot_err)?;
        chart.configure_mesh().x_desc("input").y_desc("output").draw().map_err(plot_err)?;
        let n = 200;
        chart
            .draw_series(LineSeries::new(
                (0..=n).map(|k| {
                    let z = lo + (hi - lo) * k as f64 / n as f64;
                    (z, sinc(z))
                }),
                &BLACK,
            ))
            .map_err(plot_err)?;
        chart
            .draw_series(
                sweep
                    .test_inputs
                    .iter()
                    .zip(&sweep.best_predictions)
                    .map(|(&z, &y)| Circle::new((z, y), 3, RED.filled())),
            )
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

fn plot_confusion(counts: &[Vec<usize>], title: &str) -> Result<String> {
    let n = counts.len();
    let max = counts.iter().flatten().copied().max().unwrap_or(1).max(1) as f64;
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (480, 480)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(format!("confusion: {title}"), ("sans-serif", 18))
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(50)
            .build_cartesian_2d(0..n, 0..n)
            .map_err(plot_err)?;
        let name = |k: &usize| VowelClass::ALL.get(*k).map_or_else(String::new, |c| c.name().to_owned());
        chart
            .configure_mesh()
            .disable_mesh()
            .x_desc("predicted")
            .y_desc("true")
            .x_label_formatter(&name)
            .y_label_formatter(&|k| name(&(n - 1 - k.min(&(n - 1)))))
            .draw()
            .map_err(plot_err)?;
        for (t, row) in counts.iter().enumerate() {
            for (p, &v) in row.iter().enumerate() {
                let y = n - 1 - t;
                let shade = 1.0 - v as f64 / max;
                let level = (255.0 * shade) as u8;
                chart
                    .draw_series([Rectangle::new([(p, y), (p + 1, y + 1)], RGBColor(level, level, 255).filled())])
                    .map_err(plot_err)?;
                chart.draw_series([Text::new(format!("{v}"), (p, y + 1), ("sans-serif", 18))]).map_err(plot_err)?;
            }
        }
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

fn plot_spectra(freqs: &[f64], spectra: &[Vec<f64>], mode: &str) -> Result<String> {
    let to_db = |v: f64| 10.0 * v.max(1e-300).log10();
    let (x0, x1) = bounds(freqs.iter().copied());
    let peak = spectra.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let top = to_db(peak);
    let floor = top - 80.0;
    let colors = [RED, BLUE, GREEN];
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(format!("class-mean spectra ({mode})"), ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(60)
            .build_cartesian_2d(x0..x1, floor..top + 5.0)
            .map_err(plot_err)?;
        chart.configure_mesh().x_desc("frequency (Hz)").y_desc("power (dB)").draw().map_err(plot_err)?;
        for (k, s) in spectra.iter().enumerate() {
            let color = colors[k % colors.len()];
            let label = VowelClass::ALL.get(k).map_or("class", |c| c.name());
            chart
                .draw_series(LineSeries::new(freqs.iter().zip(s).map(|(&f, &v)| (f, to_db(v).max(floor))), &color))
                .map_err(plot_err)?
                .label(label)
                .legend(move |(x, y)| PathElement::new([(x, y), (x + 16, y)], color));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

fn plot_impulse_responses(records: &[crate::wavefield::ProbeRecord]) -> Result<String> {
    let shown = &records[..records.len().min(3)];
    let rate = shown.first().map_or(1.0, |r| r.sample_rate_hz);
    let n = shown.iter().map(|r| r.samples.len()).max().unwrap_or(0);
    let t1 = (n as f64 / rate).max(1e-6);
    let to_db = |v: f64| 20.0 * v.abs().max(1e-300).log10();
    let peak = shown.iter().flat_map(|r| &r.samples).fold(0.0f64, |m, v| m.max(v.abs()));
    let top = to_db(peak);
    let colors = [RED, BLUE, GREEN];
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption("impulse responses (level)", ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(60)
            .build_cartesian_2d(0.0..t1, top - 80.0..top + 5.0)
            .map_err(plot_err)?;
        chart.configure_mesh().x_desc("time (s)").y_desc("level (dB)").draw().map_err(plot_err)?;
        // Peak level per 5 ms block keeps the file small.
        let block = ((0.005 * rate) as usize).max(1);
        for (k, r) in shown.iter().enumerate() {
            let color = colors[k % colors.len()];
            let env = r.samples.chunks(block).enumerate().map(|(b, c)| {
                let m = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                ((b * block) as f64 / rate, to_db(m).max(top - 80.0))
            });
            chart
                .draw_series(LineSeries::new(env, &color))
                .map_err(plot_err)?
                .label(r.label.clone())
                .legend(move |(x, y)| PathElement::new([(x, y), (x + 16, y)], color));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

fn plot_phasors(ch: &Characterization) -> Result<String> {
    let r = ch.points.iter().flat_map(|p| p.phasors.phasors.iter().skip(1)).fold(1e-6f64, |m, z| m.max(z.norm())) * 1.1;
    let colors = [RED, BLUE, GREEN, MAGENTA, CYAN, BLACK];
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (560, 560)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption("harmonic phasors re fundamental", ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(50)
            .build_cartesian_2d(-r..r, -r..r)
            .map_err(plot_err)?;
        chart.configure_mesh().x_desc("Re").y_desc("Im").draw().map_err(plot_err)?;
        let harmonics = ch.points.first().map_or(0, |p| p.phasors.phasors.len());
        for m in 1..harmonics {
            let color = colors[(m - 1) % colors.len()];
            let path: Vec<(f64, f64)> =
                ch.points.iter().map(|p| (p.phasors.phasors[m].re, p.phasors.phasors[m].im)).collect();
            chart
                .draw_series(LineSeries::new(path.clone(), &color))
                .map_err(plot_err)?
                .label(format!("harmonic {}", m + 1))
                .legend(move |(x, y)| PathElement::new([(x, y), (x + 16, y)], color));
            chart.draw_series(path.into_iter().map(|p| Circle::new(p, 4, color.filled()))).map_err(plot_err)?;
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

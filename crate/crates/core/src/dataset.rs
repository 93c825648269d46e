//! Normalized trial files, resampling and sliding windows.
//!
//! A trial is a CSV file with a mandatory header
//!
//! ```text
//! t,gx,gy,gz,ax,ay,az[,qw,qx,qy,qz]
//! ```
//!
//! (seconds, rad/s, m/s², optional ground-truth quaternion) plus a sidecar
//! JSON `{"name": ..., "rate_hz": ..., "source": ...}` next to it with the
//! same stem. Converters for public datasets live outside this crate and
//! only need to produce this pair. Floats are written with 17 significant
//! digits, so a save/load round trip is value-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imu::ImuSample;
use crate::quat::{Quaternion, Vec3};

pub const CSV_COLUMNS: [&str; 7] = ["t", "gx", "gy", "gz", "ax", "ay", "az"];
pub const GT_COLUMNS: [&str; 4] = ["qw", "qx", "qy", "qz"];

/// Ground-truth quaternions further than this from unit are rejected.
pub const GT_NORM_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialMeta {
    pub name: String,
    pub rate_hz: f64,
    #[serde(default)]
    pub source: String,
}

/// Runs of consecutive samples with identical gyro and accel readings.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DuplicateReport {
    pub runs: usize,
    /// Samples that repeat their predecessor.
    pub duplicated_samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialFile {
    pub meta: TrialMeta,
    pub samples: Vec<ImuSample>,
}

impl TrialFile {
    pub fn new(meta: TrialMeta, samples: Vec<ImuSample>) -> Result<Self> {
        let trial = TrialFile { meta, samples };
        trial.validate()?;
        Ok(trial)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.meta.rate_hz > 0.0 && self.meta.rate_hz.is_finite()) {
            return Err(Error::invalid(format!(
                "trial {}: rate must be > 0, got {}",
                self.meta.name, self.meta.rate_hz
            )));
        }
        for (i, pair) in self.samples.windows(2).enumerate() {
            if !(pair[1].t > pair[0].t) {
                return Err(Error::invalid(format!(
                    "trial {}: timestamps not increasing at sample {}",
                    self.meta.name,
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// True when every sample carries ground truth.
    pub fn has_ground_truth(&self) -> bool {
        !self.samples.is_empty() && self.samples.iter().all(|s| s.gt.is_some())
    }

    pub fn duplicates(&self) -> DuplicateReport {
        let mut report = DuplicateReport::default();
        let mut in_run = false;
        for pair in self.samples.windows(2) {
            if same_reading(&pair[0], &pair[1]) {
                report.duplicated_samples += 1;
                if !in_run {
                    report.runs += 1;
                }
                in_run = true;
            } else {
                in_run = false;
            }
        }
        report
    }

    /// Drops samples that repeat their predecessor's readings.
    pub fn drop_duplicates(&mut self) -> usize {
        let before = self.samples.len();
        self.samples.dedup_by(|b, a| same_reading(a, b));
        before - self.samples.len()
    }
}

fn same_reading(a: &ImuSample, b: &ImuSample) -> bool {
    a.gyro == b.gyro && a.accel == b.accel
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Loads a trial. Without an explicit `meta_path` the sidecar next to the
/// CSV is used; if that is missing too, the rate is estimated from the
/// median timestamp step and the name taken from the file stem.
pub fn load_trial(csv_path: &Path, meta_path: Option<&Path>) -> Result<TrialFile> {
    let samples = read_csv(csv_path)?;
    let sidecar = sidecar_path(csv_path);
    let meta_path = meta_path
        .map(Path::to_path_buf)
        .or_else(|| sidecar.exists().then_some(sidecar));
    let meta = match meta_path {
        Some(p) => {
            let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            serde_json::from_str(&text)?
        }
        None => TrialMeta {
            name: csv_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            rate_hz: estimate_rate(&samples)?,
            source: "unknown".into(),
        },
    };
    TrialFile::new(meta, samples)
}

fn estimate_rate(samples: &[ImuSample]) -> Result<f64> {
    let mut steps: Vec<f64> = samples.windows(2).map(|p| p[1].t - p[0].t).collect();
    if steps.is_empty() {
        return Err(Error::invalid("cannot infer a sampling rate from fewer than 2 samples"));
    }
    steps.sort_by(f64::total_cmp);
    Ok(1.0 / steps[steps.len() / 2])
}

fn read_csv(path: &Path) -> Result<Vec<ImuSample>> {
    let schema = |row: usize, message: String| Error::Schema {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::invalid(format!("{}: {other:?}", path.display())),
        })?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let base_ok = header.len() >= 7 && header[..7].iter().zip(CSV_COLUMNS).all(|(h, c)| h == c);
    let with_gt = header.len() == 11 && header[7..].iter().zip(GT_COLUMNS).all(|(h, c)| h == c);
    if !base_ok || !(header.len() == 7 || with_gt) {
        return Err(schema(
            0,
            format!(
                "header must be t,gx,gy,gz,ax,ay,az[,qw,qx,qy,qz], got {}",
                header.join(",")
            ),
        ));
    }
    let mut samples: Vec<ImuSample> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| schema(row, e.to_string()))?;
        if record.len() != header.len() {
            return Err(schema(
                row,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        let mut values = [0.0f64; 11];
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| schema(row, format!("column {}: cannot parse `{field}`", header[j])))?;
            if !v.is_finite() {
                return Err(schema(row, format!("column {}: non-finite value", header[j])));
            }
            values[j] = v;
        }
        let t = values[0];
        if let Some(prev) = samples.last() {
            if !(t > prev.t) {
                return Err(schema(
                    row,
                    format!("timestamp {t} does not increase (previous {})", prev.t),
                ));
            }
        }
        let gt = if with_gt {
            let q = Quaternion::new(values[7], values[8], values[9], values[10]);
            if (q.norm() - 1.0).abs() > GT_NORM_TOLERANCE {
                return Err(schema(row, format!("ground truth {q} is not a unit quaternion")));
            }
            Some(if (q.norm_squared() - 1.0).abs() > 1e-15 {
                q.normalize()?
            } else {
                q
            })
        } else {
            None
        };
        samples.push(ImuSample {
            t,
            gyro: Vec3::new(values[1], values[2], values[3]),
            accel: Vec3::new(values[4], values[5], values[6]),
            gt,
        });
    }
    Ok(samples)
}

/// Writes the CSV and its sidecar JSON.
pub fn save_trial(trial: &TrialFile, csv_path: &Path) -> Result<()> {
    fs::write(csv_path, trial_csv(trial)).map_err(|e| Error::io(csv_path, e))?;
    let sidecar = sidecar_path(csv_path);
    let meta = serde_json::to_string_pretty(&trial.meta)? + "\n";
    fs::write(&sidecar, meta).map_err(|e| Error::io(&sidecar, e))
}

/// CSV text of a trial; ground-truth columns are written only when every
/// sample has ground truth.
pub fn trial_csv(trial: &TrialFile) -> String {
    let with_gt = trial.has_ground_truth();
    let mut out = CSV_COLUMNS.join(",");
    if with_gt {
        out.push(',');
        out.push_str(&GT_COLUMNS.join(","));
    }
    out.push('\n');
    for s in &trial.samples {
        let mut fields = vec![s.t];
        fields.extend(s.gyro.iter().chain(s.accel.iter()).copied());
        if let (true, Some(q)) = (with_gt, s.gt) {
            fields.extend(q.to_array());
        }
        let line: Vec<String> = fields.into_iter().map(fmt_f64).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// `n` frames per window (half past, half future), a new window every
/// `stride` frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub n: usize,
    pub stride: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec { n: 200, stride: 10 }
    }
}

impl WindowSpec {
    pub fn new(n: usize, stride: usize) -> Result<Self> {
        let spec = WindowSpec { n, stride };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || !self.n.is_multiple_of(2) || self.stride < 1 || self.stride > self.n {
            return Err(Error::invalid(format!(
                "window needs an even N >= 2 and 1 <= stride <= N, got N = {}, stride = {}",
                self.n, self.stride
            )));
        }
        Ok(())
    }

    pub fn count(&self, len: usize) -> usize {
        if len < self.n {
            0
        } else {
            (len - self.n) / self.stride + 1
        }
    }
}

/// Six channels (gx, gy, gz, ax, ay, az) × N frames, channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub start: usize,
    /// Index of the estimate, `start + N/2`.
    pub center: usize,
    pub n: usize,
    pub data: Vec<f64>,
    pub rate_hz: f64,
    pub t_center: f64,
    pub target: Option<Quaternion>,
}

impl Window {
    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.n..(c + 1) * self.n]
    }
}

/// Windows starting at `k·stride`; edges without a full window are skipped.
pub fn extract_windows(trial: &TrialFile, spec: WindowSpec) -> Result<Vec<Window>> {
    spec.validate()?;
    if trial.len() < spec.n {
        return Err(Error::TrialTooShort {
            len: trial.len(),
            needed: spec.n,
        });
    }
    let n = spec.n;
    Ok((0..spec.count(trial.len()))
        .map(|k| {
            let start = k * spec.stride;
            let rows = &trial.samples[start..start + n];
            let mut data = vec![0.0; 6 * n];
            for (j, s) in rows.iter().enumerate() {
                for c in 0..3 {
                    data[c * n + j] = s.gyro[c];
                    data[(c + 3) * n + j] = s.accel[c];
                }
            }
            let center = start + n / 2;
            Window {
                start,
                center,
                n,
                data,
                rate_hz: trial.meta.rate_hz,
                t_center: trial.samples[center].t,
                target: trial.samples[center].gt,
            }
        })
        .collect())
}

/// Resamples onto a uniform grid starting at the first timestamp. Gyro and
/// accel are interpolated linearly, ground truth by shortest-arc slerp.
pub fn resample(trial: &TrialFile, target_rate: f64) -> Result<TrialFile> {
    if !(target_rate > 0.0 && target_rate.is_finite()) {
        return Err(Error::invalid(format!("target rate must be > 0, got {target_rate}")));
    }
    if trial.len() < 2 {
        return Err(Error::invalid("resampling needs at least 2 samples"));
    }
    if target_rate == trial.meta.rate_hz {
        return Ok(trial.clone());
    }
    let src = &trial.samples;
    let t0 = src[0].t;
    let t_end = src[src.len() - 1].t;
    let with_gt = trial.has_ground_truth();
    let mut out = Vec::new();
    let mut seg = 0;
    for k in 0.. {
        let t = t0 + k as f64 / target_rate;
        if t > t_end + 1e-9 / target_rate {
            break;
        }
        let t = t.min(t_end);
        while seg + 2 < src.len() && src[seg + 1].t <= t {
            seg += 1;
        }
        let (a, b) = (&src[seg], &src[seg + 1]);
        let sample = if t == a.t {
            *a
        } else if t == b.t {
            *b
        } else {
            let u = (t - a.t) / (b.t - a.t);
            ImuSample {
                t,
                gyro: a.gyro.lerp(&b.gyro, u),
                accel: a.accel.lerp(&b.accel, u),
                gt: match (with_gt, a.gt, b.gt) {
                    (true, Some(qa), Some(qb)) => Some(qa.slerp(qb, u)),
                    _ => None,
                },
            }
        };
        out.push(sample);
    }
    let meta = TrialMeta {
        rate_hz: target_rate,
        ..trial.meta.clone()
    };
    TrialFile::new(meta, out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    #[serde(default)]
    pub meta_path: Option<PathBuf>,
}

/// `{"trials": [{"path": ..., "meta_path": ...}]}`; relative paths are
/// resolved against the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub trials: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: Manifest = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for entry in &mut manifest.trials {
            entry.path = base.join(&entry.path);
            if let Some(m) = &mut entry.meta_path {
                *m = base.join(&*m);
            }
        }
        Ok(manifest)
    }

    pub fn load_trials(&self) -> Result<Vec<TrialFile>> {
        self.trials
            .iter()
            .map(|e| load_trial(&e.path, e.meta_path.as_deref()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::io::Write;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::File::create(&p).unwrap().write_all(text.as_bytes()).unwrap();
        p
    }

    fn synthetic(len: usize) -> TrialFile {
        let samples = (0..len)
            .map(|i| {
                let f = i as f64;
                ImuSample {
                    t: f * 0.01,
                    gyro: Vec3::new(f, f + 0.1, f + 0.2),
                    accel: Vec3::new(-f, -f - 0.1, -f - 0.2),
                    gt: Some(Quaternion::from_rotation_vector(Vec3::new(0.0, 0.0, f * 1e-3))),
                }
            })
            .collect();
        let meta = TrialMeta {
            name: "synthetic".into(),
            rate_hz: 100.0,
            source: "test".into(),
        };
        TrialFile::new(meta, samples).unwrap()
    }

    #[test]
    fn minimal_fixture_loads() {
        let dir = tempfile::tempdir().unwrap();
        let csv = write(
            dir.path(),
            "min.csv",
            "t,gx,gy,gz,ax,ay,az\n0,0,0,0,0,0,9.8\n0.01,0,0,0,0,0,9.8\n0.02,0,0,0,0,0,9.8\n",
        );
        write(
            dir.path(),
            "min.json",
            r#"{"name":"min","rate_hz":100.0,"source":"fixture"}"#,
        );
        let t = load_trial(&csv, None).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.meta.rate_hz, 100.0);
        assert!(!t.has_ground_truth());
    }

    #[test]
    fn sidecar_rate_is_kept() {
        let dir = tempfile::tempdir().unwrap();
        let csv = write(dir.path(), "broad.csv", "t,gx,gy,gz,ax,ay,az\n0,0,0,0,0,0,9.8\n");
        let meta = write(
            dir.path(),
            "meta.json",
            r#"{"name":"broad_01","rate_hz":286.3,"source":"BROAD"}"#,
        );
        let t = load_trial(&csv, Some(&meta)).unwrap();
        assert_eq!(t.meta.rate_hz, 286.3);
    }

    #[test]
    fn rate_inferred_without_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let csv = write(
            dir.path(),
            "x.csv",
            "t,gx,gy,gz,ax,ay,az\n0,0,0,0,0,0,9.8\n0.005,0,0,0,0,0,9.8\n0.01,0,0,0,0,0,9.8\n",
        );
        let t = load_trial(&csv, None).unwrap();
        assert_abs_diff_eq!(t.meta.rate_hz, 200.0, epsilon = 1e-9);
        assert_eq!(t.meta.name, "x");
    }

    #[test]
    fn decreasing_time_names_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let mut text = String::from("t,gx,gy,gz,ax,ay,az\n");
        for (i, t) in [0.0, 0.01, 0.02, 0.03, 0.04, 0.05, 0.045, 0.07].iter().enumerate() {
            text.push_str(&format!("{t},{i},0,0,0,0,9.8\n"));
        }
        let csv = write(dir.path(), "bad.csv", &text);
        match load_trial(&csv, None) {
            Err(Error::Schema { row, .. }) => assert_eq!(row, 7),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn schema_errors() {
        let dir = tempfile::tempdir().unwrap();
        let bad_header = write(dir.path(), "h.csv", "time,gx,gy,gz,ax,ay,az\n0,0,0,0,0,0,0\n");
        assert!(matches!(
            load_trial(&bad_header, None),
            Err(Error::Schema { row: 0, .. })
        ));
        let nan = write(
            dir.path(),
            "n.csv",
            "t,gx,gy,gz,ax,ay,az\n0,0,0,0,0,0,0\n1,NaN,0,0,0,0,0\n",
        );
        assert!(matches!(load_trial(&nan, None), Err(Error::Schema { row: 2, .. })));
        let short = write(dir.path(), "s.csv", "t,gx,gy,gz,ax,ay,az\n0,0,0,0,0,0\n");
        assert!(matches!(load_trial(&short, None), Err(Error::Schema { row: 1, .. })));
        let gt = write(
            dir.path(),
            "g.csv",
            "t,gx,gy,gz,ax,ay,az,qw,qx,qy,qz\n0,0,0,0,0,0,0,1.1,0,0,0\n",
        );
        assert!(matches!(load_trial(&gt, None), Err(Error::Schema { row: 1, .. })));
    }

    #[test]
    fn ground_truth_is_renormalized() {
        let dir = tempfile::tempdir().unwrap();
        let csv = write(
            dir.path(),
            "g.csv",
            "t,gx,gy,gz,ax,ay,az,qw,qx,qy,qz\n0,0,0,0,0,0,9.8,1.0005,0,0,0\n0.01,0,0,0,0,0,9.8,1,0,0,0\n",
        );
        let t = load_trial(&csv, None).unwrap();
        assert_eq!(t.samples[0].gt.unwrap(), Quaternion::IDENTITY);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let trial = synthetic(25);
        let p = dir.path().join("rt.csv");
        save_trial(&trial, &p).unwrap();
        let back = load_trial(&p, None).unwrap();
        assert_eq!(back, trial);
        let p2 = dir.path().join("rt2.csv");
        save_trial(&back, &p2).unwrap();
        assert_eq!(fs::read(&p).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn duplicate_runs_are_reported_and_dropped() {
        let mut trial = synthetic(10);
        for i in [3, 4, 7] {
            trial.samples[i].gyro = trial.samples[i - 1].gyro;
            trial.samples[i].accel = trial.samples[i - 1].accel;
        }
        assert_eq!(
            trial.duplicates(),
            DuplicateReport {
                runs: 2,
                duplicated_samples: 3
            }
        );
        assert_eq!(trial.drop_duplicates(), 3);
        assert_eq!(trial.len(), 7);
        assert_eq!(trial.duplicates(), DuplicateReport::default());
    }

    #[test]
    fn window_counts() {
        let spec = WindowSpec::new(200, 10).unwrap();
        let w = extract_windows(&synthetic(1000), spec).unwrap();
        assert_eq!(w.len(), 81);
        let w = extract_windows(&synthetic(200), spec).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].center, 100);
        assert!(matches!(
            extract_windows(&synthetic(150), spec),
            Err(Error::TrialTooShort { len: 150, needed: 200 })
        ));
    }

    #[test]
    fn window_spec_validation() {
        assert!(WindowSpec::new(201, 10).is_err());
        assert!(WindowSpec::new(0, 1).is_err());
        assert!(WindowSpec::new(20, 0).is_err());
        assert!(WindowSpec::new(20, 21).is_err());
        assert!(WindowSpec::new(2, 2).is_ok());
    }

    #[test]
    fn window_targets_come_from_center() {
        let trial = synthetic(60);
        let w = extract_windows(&trial, WindowSpec::new(20, 7).unwrap()).unwrap();
        for win in &w {
            assert_eq!(win.target, trial.samples[win.center].gt);
            assert_eq!(win.t_center, trial.samples[win.center].t);
            assert_eq!(win.channel(0)[0], trial.samples[win.start].gyro.x);
            assert_eq!(win.channel(5)[19], trial.samples[win.start + 19].accel.z);
        }
    }

    #[test]
    fn resample_identity_and_halving() {
        let trial = synthetic(101);
        assert_eq!(resample(&trial, 100.0).unwrap(), trial);
        let half = resample(&trial, 50.0).unwrap();
        assert!((half.len() as i64 - 51).abs() <= 1);
        assert_eq!(half.meta.rate_hz, 50.0);
        // every other source sample lands exactly on the new grid
        assert_eq!(half.samples[3].gyro, trial.samples[6].gyro);
        assert!(resample(&trial, 0.0).is_err());
        let tiny = TrialFile::new(trial.meta.clone(), trial.samples[..1].to_vec()).unwrap();
        assert!(resample(&tiny, 10.0).is_err());
    }

    #[test]
    fn manifest_paths_are_relative_to_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let trial = synthetic(5);
        save_trial(&trial, &dir.path().join("a.csv")).unwrap();
        let m = write(dir.path(), "m.json", r#"{"trials":[{"path":"a.csv"}]}"#);
        let manifest = Manifest::load(&m).unwrap();
        assert_eq!(manifest.load_trials().unwrap(), vec![trial]);
    }
}

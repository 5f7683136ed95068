use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use compass_core::attitude::{estimate_attitude_rig, AttitudeConfig};
use compass_core::database::{build_database, Clearance};
use compass_core::descriptor::{DescriptorStats, RadialDescriptor, CHANNELS, HIT_TYPE_ONLY};
use compass_core::detection::{detect_windows as detect_windows_core, DetectorConfig, LineSegment};
use compass_core::error::CompassError;
use compass_core::fisheye::{self, CameraRig};
use compass_core::floorplan::{self, Pose2D};
use compass_core::matching::{self, MatchConfig};
use compass_core::raycast::{self, RaycastConfig};
use compass_core::report;
use compass_core::synth::{self, EvalConfig, ObservationNoise, SynthPlanSpec};

fn err(e: CompassError) -> PyErr {
    match e {
        CompassError::Io { .. } | CompassError::Decode { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn raycast_cfg(n_bins: usize, r_max: f64, step: f64) -> PyResult<RaycastConfig> {
    let c = RaycastConfig {
        n_bins,
        r_max,
        step,
        ..RaycastConfig::default()
    };
    c.validate().map_err(err)?;
    Ok(c)
}

fn match_cfg(hit_type_only: bool, top_k: usize, prefilter: Option<u32>) -> MatchConfig {
    let mut c = if hit_type_only { MatchConfig::hit_type_only() } else { MatchConfig::default() };
    c.top_k = top_k;
    c.prefilter_tolerance = prefilter;
    c
}

/// Floor plan raster with wall and window masks.
#[pyclass(module = "compass", frozen)]
#[derive(Clone)]
struct FloorPlan {
    inner: floorplan::FloorPlanRaster,
}

#[pymethods]
impl FloorPlan {
    /// Load a plan image. Without `resolution` the JSON sidecar supplies metadata.
    #[staticmethod]
    #[pyo3(signature = (path, resolution=None, origin=(0.0, 0.0)))]
    fn load(path: PathBuf, resolution: Option<f64>, origin: (f64, f64)) -> PyResult<Self> {
        let inner = match resolution {
            Some(r) => floorplan::load_floorplan(
                &path,
                floorplan::ColorRule::DEFAULT_WALL,
                floorplan::ColorRule::DEFAULT_WINDOW,
                r,
                [origin.0, origin.1],
            ),
            None => floorplan::load_floorplan_with_sidecar(&path),
        }
        .map_err(err)?;
        Ok(Self { inner })
    }

    /// Synthetic plan: perimeter walls, partitioned rooms, facade windows.
    #[staticmethod]
    #[pyo3(signature = (seed=0, width=16.0, height=12.0, resolution=0.05, window_fraction=0.3, max_depth=2))]
    fn generate(seed: u64, width: f64, height: f64, resolution: f64, window_fraction: f64, max_depth: usize) -> PyResult<Self> {
        let spec = SynthPlanSpec {
            width,
            height,
            resolution,
            window_fraction,
            max_depth,
            ..SynthPlanSpec::default()
        };
        Ok(Self {
            inner: synth::generate_plan(&spec, seed).map_err(err)?,
        })
    }

    fn save_png(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save_png(&path).map_err(err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn resolution(&self) -> f64 {
        self.inner.resolution()
    }

    #[getter]
    fn origin(&self) -> (f64, f64) {
        let o = self.inner.origin();
        (o[0], o[1])
    }

    fn world_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        let p = self.inner.world_to_pixel([x, y]);
        (p[0], p[1])
    }

    /// "free", "wall" or "window".
    fn cell_at(&self, x: f64, y: f64) -> &'static str {
        match self.inner.cell_at_world([x, y]) {
            floorplan::Cell::Free => "free",
            floorplan::Cell::Wall => "wall",
            floorplan::Cell::Window => "window",
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "FloorPlan({}x{} px, {} m/px, origin={:?})",
            self.inner.width(),
            self.inner.height(),
            self.inner.resolution(),
            self.inner.origin()
        )
    }
}

/// Five-channel radial descriptor.
#[pyclass(module = "compass", frozen)]
#[derive(Clone)]
struct Descriptor {
    inner: RadialDescriptor,
}

#[pymethods]
impl Descriptor {
    /// Hit-type-only descriptor from a row of 1.0 / 0.5 / 0.0 values.
    #[staticmethod]
    fn from_hit_types(row: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: RadialDescriptor::from_hit_type_row(row).map_err(err)?,
        })
    }

    /// All five channels; `active` defaults to all channels.
    #[staticmethod]
    #[pyo3(signature = (rows, active=None))]
    fn from_rows(rows: Vec<Vec<f64>>, active: Option<Vec<bool>>) -> PyResult<Self> {
        let rows: [Vec<f64>; CHANNELS] = rows
            .try_into()
            .map_err(|r: Vec<Vec<f64>>| PyValueError::new_err(format!("expected {CHANNELS} rows, got {}", r.len())))?;
        let active: [bool; CHANNELS] = match active {
            Some(a) => a
                .try_into()
                .map_err(|_| PyValueError::new_err(format!("active needs {CHANNELS} flags")))?,
            None => [true; CHANNELS],
        };
        Ok(Self {
            inner: RadialDescriptor::from_rows(rows, active).map_err(err)?,
        })
    }

    #[getter]
    fn n_bins(&self) -> usize {
        self.inner.n_bins()
    }

    #[getter]
    fn active(&self) -> Vec<bool> {
        self.inner.active().to_vec()
    }

    fn row(&self, channel: usize) -> PyResult<Vec<f64>> {
        if channel >= CHANNELS {
            return Err(PyValueError::new_err(format!("channel must be < {CHANNELS}")));
        }
        Ok(self.inner.row(channel).to_vec())
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        (0..CHANNELS).map(|c| self.inner.row(c).to_vec()).collect()
    }

    /// Column-cyclic shift: bin j of the result holds bin j + k of this descriptor.
    fn shifted(&self, k: i64) -> Self {
        Self {
            inner: self.inner.shifted(k),
        }
    }

    fn transition_count(&self) -> u32 {
        self.inner.transition_count()
    }

    #[pyo3(signature = (r_max=30.0))]
    fn stats<'py>(&self, py: Python<'py>, r_max: f64) -> PyResult<Bound<'py, PyDict>> {
        let s = DescriptorStats::compute(&self.inner, r_max);
        let d = PyDict::new(py);
        d.set_item("n_bins", s.n_bins)?;
        d.set_item("wall_bins", s.wall_bins)?;
        d.set_item("window_bins", s.window_bins)?;
        d.set_item("open_bins", s.open_bins)?;
        d.set_item("range_min", s.range_min)?;
        d.set_item("range_max", s.range_max)?;
        d.set_item("mean_gradient", s.mean_gradient)?;
        d.set_item("transition_count", s.transition_count)?;
        d.set_item("segments", s.segments)?;
        d.set_item("summary", s.summary())?;
        Ok(d)
    }

    fn to_svg(&self, title: &str) -> String {
        compass_core::svg::descriptor_svg(&self.inner, title)
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("Descriptor(n_bins={}, active={:?})", self.inner.n_bins(), self.inner.active())
    }
}

/// Candidate descriptors on a grid over a plan.
#[pyclass(module = "compass", frozen)]
struct Database {
    inner: compass_core::database::Database,
}

#[pymethods]
impl Database {
    #[staticmethod]
    #[pyo3(signature = (plan, grid_step=0.5, clearance=0.3, yaw_anchor=0.0, n_bins=360, r_max=30.0, step=0.02))]
    fn build(
        py: Python<'_>,
        plan: &FloorPlan,
        grid_step: f64,
        clearance: f64,
        yaw_anchor: f64,
        n_bins: usize,
        r_max: f64,
        step: f64,
    ) -> PyResult<Self> {
        let cfg = raycast_cfg(n_bins, r_max, step)?;
        let raster = &plan.inner;
        let inner = py
            .detach(|| build_database(raster, grid_step, yaw_anchor, &cfg, &Clearance(clearance)))
            .map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: compass_core::database::Database::load(&path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json().to_string()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn position(&self, index: usize) -> PyResult<(f64, f64)> {
        let e = self
            .inner
            .entries
            .get(index)
            .ok_or_else(|| PyValueError::new_err("candidate index out of range"))?;
        Ok((e.position[0], e.position[1]))
    }

    fn descriptor(&self, index: usize) -> PyResult<Descriptor> {
        let e = self
            .inner
            .entries
            .get(index)
            .ok_or_else(|| PyValueError::new_err("candidate index out of range"))?;
        Ok(Descriptor {
            inner: e.descriptor.clone(),
        })
    }

    /// Ranked matches as dicts with candidate, x, y, shift, yaw (radians) and score.
    #[pyo3(signature = (query, hit_type_only=false, top_k=10, prefilter=None))]
    fn query<'py>(
        &self,
        py: Python<'py>,
        query: &Descriptor,
        hit_type_only: bool,
        top_k: usize,
        prefilter: Option<u32>,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let cfg = match_cfg(hit_type_only, top_k, prefilter);
        let (q, db) = (&query.inner, &self.inner);
        let results = py.detach(|| matching::match_query(q, db, &cfg)).map_err(err)?;
        results
            .into_iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("candidate", r.candidate_index)?;
                d.set_item("x", r.position[0])?;
                d.set_item("y", r.position[1])?;
                d.set_item("shift", r.best_shift)?;
                d.set_item("yaw", r.yaw_estimate)?;
                d.set_item("score", r.score)?;
                Ok(d)
            })
            .collect()
    }
}

/// Kannala-Brandt fisheye camera.
#[pyclass(module = "compass", frozen)]
#[derive(Clone)]
struct CameraModel {
    inner: fisheye::CameraModel,
}

#[pymethods]
impl CameraModel {
    #[new]
    #[pyo3(signature = (f, c_x, c_y, width, height, k=(0.0, 0.0, 0.0, 0.0), theta_max_deg=95.0))]
    fn new(f: f64, c_x: f64, c_y: f64, width: u32, height: u32, k: (f64, f64, f64, f64), theta_max_deg: f64) -> PyResult<Self> {
        let inner = fisheye::CameraModel {
            focal: f,
            principal_point: [c_x, c_y],
            theta_max: theta_max_deg.to_radians(),
            distortion: [k.0, k.1, k.2, k.3],
            image_size: [width, height],
        };
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    fn project(&self, bearing: (f64, f64, f64)) -> PyResult<(f64, f64)> {
        let p = self.inner.project([bearing.0, bearing.1, bearing.2]).map_err(err)?;
        Ok((p[0], p[1]))
    }

    fn unproject(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let b = self.inner.unproject([x, y]);
        (b[0], b[1], b[2])
    }

    #[getter]
    fn fov_radius(&self) -> f64 {
        self.inner.fov_radius()
    }
}

#[pyfunction]
#[pyo3(signature = (plan, x, y, yaw=0.0, n_bins=360, r_max=30.0, step=0.02))]
fn compute_descriptor(plan: &FloorPlan, x: f64, y: f64, yaw: f64, n_bins: usize, r_max: f64, step: f64) -> PyResult<Descriptor> {
    let cfg = raycast_cfg(n_bins, r_max, step)?;
    Ok(Descriptor {
        inner: raycast::compute_descriptor(&plan.inner, Pose2D::new(x, y, yaw), &cfg).map_err(err)?,
    })
}

/// Similarity of `a` against `b` shifted by every bin count.
#[pyfunction]
#[pyo3(signature = (a, b, hit_type_only=false))]
fn correlation_curve(a: &Descriptor, b: &Descriptor, hit_type_only: bool) -> PyResult<Vec<f64>> {
    matching::correlation_curve(&a.inner, &b.inner, &match_cfg(hit_type_only, 1, None)).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (a, b, hit_type_only=false))]
fn best_shift(a: &Descriptor, b: &Descriptor, hit_type_only: bool) -> PyResult<(usize, f64)> {
    matching::best_shift_fft(&a.inner, &b.inner, &match_cfg(hit_type_only, 1, None)).map_err(err)
}

/// Per-bin hit-type agreement of `camera` against `map` shifted by `shift`.
#[pyfunction]
fn agreement<'py>(py: Python<'py>, camera: &Descriptor, map: &Descriptor, shift: i64) -> PyResult<Bound<'py, PyDict>> {
    let rep = report::agreement_report(&camera.inner, &map.inner, shift).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("agree_count", rep.agree_count)?;
    d.set_item("fraction", rep.fraction)?;
    d.set_item(
        "disagreement_arcs",
        rep.disagreement_arcs.iter().map(|a| (a[0], a[1])).collect::<Vec<_>>(),
    )?;
    d.set_item("agree", rep.bins.iter().map(|b| b.agree).collect::<Vec<_>>())?;
    d.set_item("summary", rep.summary())?;
    Ok(d)
}

/// Window boxes `(camera_id, x, y, w, h, score)` found in an image file.
#[pyfunction]
#[pyo3(signature = (image_path, camera_id="front", camera=None))]
fn detect_windows(
    image_path: PathBuf,
    camera_id: &str,
    camera: Option<&CameraModel>,
) -> PyResult<Vec<(String, f64, f64, f64, f64, f64)>> {
    let img = image::open(&image_path).map_err(|e| PyIOError::new_err(format!("{}: {e}", image_path.display())))?;
    let (gray, rgb) = (img.to_luma8(), img.to_rgb8());
    let out = detect_windows_core(
        &gray,
        Some(&rgb),
        camera.map(|c| &c.inner),
        camera_id,
        &DetectorConfig::default(),
    );
    Ok(out
        .detections
        .into_iter()
        .map(|d| (d.camera_id, d.bbox[0], d.bbox[1], d.bbox[2], d.bbox[3], d.brightness_score))
        .collect())
}

/// Hit-type descriptor from detections `(camera_id, x, y, w, h[, score])` and a rig config text.
#[pyfunction]
#[pyo3(signature = (rig_toml, detections, n_bins=360))]
fn visual_descriptor(rig_toml: &str, detections: Vec<(String, f64, f64, f64, f64, f64)>, n_bins: usize) -> PyResult<Descriptor> {
    let rig = CameraRig::from_toml_str(rig_toml).map_err(err)?;
    let dets: Vec<_> = detections
        .into_iter()
        .map(|(id, x, y, w, h, s)| {
            let mut d = compass_core::detection::WindowDetection::new(&id, [x, y, w, h]);
            d.brightness_score = s;
            d
        })
        .collect();
    Ok(Descriptor {
        inner: fisheye::build_visual_descriptor(&rig, &dets, n_bins).map_err(err)?,
    })
}

/// Roll and pitch (radians) from per-camera segments `{camera_id: [(x1, y1, x2, y2), ...]}`.
#[pyfunction]
#[pyo3(signature = (rig_toml, segments, seed=0))]
fn estimate_attitude<'py>(
    py: Python<'py>,
    rig_toml: &str,
    segments: std::collections::HashMap<String, Vec<(f64, f64, f64, f64)>>,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let rig = CameraRig::from_toml_str(rig_toml).map_err(err)?;
    let per_camera: Vec<Vec<LineSegment>> = rig
        .cameras
        .iter()
        .map(|c| {
            segments
                .get(&c.id)
                .map(|v| v.iter().map(|s| LineSegment::new([s.0, s.1], [s.2, s.3])).collect())
                .unwrap_or_default()
        })
        .collect();
    let mut cfg = AttitudeConfig::default();
    cfg.ransac.seed = seed;
    let res = py.detach(|| estimate_attitude_rig(&rig, &per_camera, &cfg)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("roll", res.fused.roll)?;
    d.set_item("pitch", res.fused.pitch)?;
    d.set_item("gravity", (res.fused.gravity[0], res.fused.gravity[1], res.fused.gravity[2]))?;
    d.set_item("inliers", res.fused.inlier_count)?;
    d.set_item("single_source", res.fused.single_source)?;
    Ok(d)
}

/// Synthetic localization benchmark; returns the summary rates and medians.
#[pyfunction]
#[pyo3(signature = (plan, db, trials=200, seed=0, dropout=0.0, jitter_deg=0.0, spurious_rate=0.0, hit_type_only=true))]
#[allow(clippy::too_many_arguments)]
fn run_eval<'py>(
    py: Python<'py>,
    plan: &FloorPlan,
    db: &Database,
    trials: usize,
    seed: u64,
    dropout: f64,
    jitter_deg: f64,
    spurious_rate: f64,
    hit_type_only: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = EvalConfig {
        trials,
        seed,
        noise: ObservationNoise {
            dropout,
            jitter_deg,
            spurious_rate,
            ..ObservationNoise::default()
        },
        ..EvalConfig::default()
    };
    cfg.noise.validate().map_err(err)?;
    let mc = match_cfg(hit_type_only, 10, None);
    let (raster, database) = (&plan.inner, &db.inner);
    let rep = py
        .detach(|| synth::run_localization_eval(raster, database, &mc, &cfg))
        .map_err(err)?;
    let s = &rep.summary;
    let d = PyDict::new(py);
    d.set_item("trials", s.trials)?;
    d.set_item("unique_trials", s.unique_trials)?;
    d.set_item("rank1_rate", s.rank1_rate)?;
    d.set_item("oracle_success_rate_unique", s.oracle_success_rate_unique)?;
    d.set_item("true_cell_yaw_within_2_rate", s.true_cell_yaw_within_2_rate)?;
    d.set_item("median_yaw_error_deg", s.median_yaw_error_deg)?;
    d.set_item("median_position_error", s.median_position_error)?;
    d.set_item("csv", rep.to_csv(&report::tool_header("python run_eval", &cfg)))?;
    Ok(d)
}

#[pymodule]
pub fn compass(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("HIT_TYPE_ONLY", HIT_TYPE_ONLY.to_vec())?;
    m.add_class::<FloorPlan>()?;
    m.add_class::<Descriptor>()?;
    m.add_class::<Database>()?;
    m.add_class::<CameraModel>()?;
    m.add_function(wrap_pyfunction!(compute_descriptor, m)?)?;
    m.add_function(wrap_pyfunction!(correlation_curve, m)?)?;
    m.add_function(wrap_pyfunction!(best_shift, m)?)?;
    m.add_function(wrap_pyfunction!(agreement, m)?)?;
    m.add_function(wrap_pyfunction!(detect_windows, m)?)?;
    m.add_function(wrap_pyfunction!(visual_descriptor, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_attitude, m)?)?;
    m.add_function(wrap_pyfunction!(run_eval, m)?)?;
    Ok(())
}

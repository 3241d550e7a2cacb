use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::env::{Dataset, LanderState, ACTION_DIM, STATE_DIM};
use crate::error::{Error, Result};
use crate::ndcore::Matrix;
use crate::nets::{MlpParams, PolicyParams};
use crate::rng::derive_seed;
use crate::uncertainty::{ensemble_outputs, mixed_q_passes, row_estimates};

/// Where per-state uncertainty comes from.
#[derive(Clone, Copy, Debug)]
pub enum UncertaintySource<'a> {
    /// Variance of the λ-mixed twin critics over `passes` dropout passes.
    Dropout {
        q1: &'a MlpParams,
        q2: &'a MlpParams,
        lambda: f64,
        passes: usize,
        seed: u64,
    },
    /// Variance across deterministic ensemble members.
    Ensemble(&'a [MlpParams]),
}

/// Rows scored per forward batch. Dropout pass `t` of chunk `c` uses base
/// seed `derive_seed(seed, c)`.
pub const SCORE_CHUNK: usize = 1024;

impl UncertaintySource<'_> {
    /// One variance per row of `inputs` (state‖action).
    pub fn variances(&self, inputs: &Matrix) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(inputs.rows());
        for (c, start) in (0..inputs.rows()).step_by(SCORE_CHUNK).enumerate() {
            let rows: Vec<usize> = (start..(start + SCORE_CHUNK).min(inputs.rows())).collect();
            let block = inputs.gather_rows(&rows)?;
            let samples = match *self {
                UncertaintySource::Dropout {
                    q1,
                    q2,
                    lambda,
                    passes,
                    seed,
                } => mixed_q_passes(q1, q2, &block, lambda, passes, derive_seed(seed, c as u64))?,
                UncertaintySource::Ensemble(members) => ensemble_outputs(members, &block)?,
            };
            out.extend(row_estimates(&samples, 0.0)?.into_iter().map(|e| e.variance));
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug)]
pub enum ActionSource<'a> {
    /// The action stored with each dataset state.
    Dataset,
    /// The deterministic action `tanh(μ(s))` of a policy.
    Policy(&'a PolicyParams),
    Fixed([f64; ACTION_DIM]),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HeatCell {
    pub count: usize,
    pub mean_uncertainty: f64,
    pub mean_speed: f64,
}

/// Binned statistics over (x, y) displacement. Cell `(i, j)` covers
/// `[x_edges[i], x_edges[i+1]) × [y_edges[j], y_edges[j+1])`, with the last
/// bin on each axis closed on the right.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    /// Row-major in x: index `i * ny + j`.
    pub cells: Vec<HeatCell>,
}

pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Result<Vec<f64>> {
    if bins < 2 || !(hi > lo) {
        return Err(Error::contract(format!("need >= 2 bins over a non-empty range, got {bins} over [{lo}, {hi}]")));
    }
    Ok((0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect())
}

fn check_edges(edges: &[f64], axis: &str) -> Result<()> {
    if edges.len() < 3 {
        return Err(Error::contract(format!("{axis} axis needs at least 2 bins")));
    }
    if edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::contract(format!("{axis} edges must be strictly increasing")));
    }
    Ok(())
}

fn locate(edges: &[f64], v: f64) -> Option<usize> {
    let n = edges.len() - 1;
    if !(v >= edges[0] && v <= edges[n]) {
        return None;
    }
    if v == edges[n] {
        return Some(n - 1);
    }
    Some(edges.partition_point(|&e| e <= v) - 1)
}

impl HeatmapGrid {
    pub fn nx(&self) -> usize {
        self.x_edges.len() - 1
    }

    pub fn ny(&self) -> usize {
        self.y_edges.len() - 1
    }

    pub fn cell(&self, i: usize, j: usize) -> &HeatCell {
        &self.cells[i * self.ny() + j]
    }

    /// Bins states by position and averages `values` and speed per cell.
    /// States outside the edges are ignored.
    pub fn accumulate(x_edges: &[f64], y_edges: &[f64], states: &[LanderState], values: &[f64]) -> Result<Self> {
        check_edges(x_edges, "x")?;
        check_edges(y_edges, "y")?;
        if states.len() != values.len() {
            return Err(Error::Dimension {
                op: "heatmap",
                left: (states.len(), 1),
                right: (values.len(), 1),
            });
        }
        let ny = y_edges.len() - 1;
        let mut sums = vec![(0usize, 0.0, 0.0); (x_edges.len() - 1) * ny];
        for (s, &v) in states.iter().zip(values) {
            if let (Some(i), Some(j)) = (locate(x_edges, s.x), locate(y_edges, s.y)) {
                let c = &mut sums[i * ny + j];
                c.0 += 1;
                c.1 += v;
                c.2 += s.speed();
            }
        }
        let cells = sums
            .into_iter()
            .map(|(n, u, sp)| match n {
                0 => HeatCell::default(),
                _ => HeatCell {
                    count: n,
                    mean_uncertainty: u / n as f64,
                    mean_speed: sp / n as f64,
                },
            })
            .collect();
        Ok(Self {
            x_edges: x_edges.to_vec(),
            y_edges: y_edges.to_vec(),
            cells,
        })
    }

    /// Mean of per-cell mean uncertainty over non-empty cells whose bounds
    /// `(x_lo, x_hi, y_lo, y_hi)` satisfy `pred`.
    pub fn region_mean(&self, pred: impl Fn(f64, f64, f64, f64) -> bool) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for i in 0..self.nx() {
            for j in 0..self.ny() {
                let c = self.cell(i, j);
                if c.count > 0 && pred(self.x_edges[i], self.x_edges[i + 1], self.y_edges[j], self.y_edges[j + 1]) {
                    sum += c.mean_uncertainty;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| sum / n as f64)
    }

    /// Copy with each cell's uncertainty divided by its mean speed
    /// (cells with zero speed keep their raw value).
    pub fn speed_normalized(&self) -> Self {
        let mut out = self.clone();
        for c in &mut out.cells {
            if c.mean_speed > 0.0 {
                c.mean_uncertainty /= c.mean_speed;
            }
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["bin_x", "bin_y", "count", "mean_uncertainty", "mean_speed"])?;
        for i in 0..self.nx() {
            for j in 0..self.ny() {
                let c = self.cell(i, j);
                w.serialize((i, j, c.count, c.mean_uncertainty, c.mean_speed))?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::from(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    /// Parses [`HeatmapGrid::to_csv`] output; the edges are not part of the
    /// CSV and must be supplied.
    pub fn from_csv(text: &str, x_edges: &[f64], y_edges: &[f64]) -> Result<Self> {
        check_edges(x_edges, "x")?;
        check_edges(y_edges, "y")?;
        let nx = x_edges.len() - 1;
        let ny = y_edges.len() - 1;
        let mut cells = vec![None; nx * ny];
        let mut r = csv::Reader::from_reader(text.as_bytes());
        for rec in r.deserialize() {
            let (i, j, count, mu, sp): (usize, usize, usize, f64, f64) = rec?;
            if i >= nx || j >= ny {
                return Err(Error::format(0, format!("cell ({i}, {j}) outside a {nx}x{ny} grid")));
            }
            cells[i * ny + j] = Some(HeatCell {
                count,
                mean_uncertainty: mu,
                mean_speed: sp,
            });
        }
        let cells = cells
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::format(0, "heatmap csv is missing cells"))?;
        Ok(Self {
            x_edges: x_edges.to_vec(),
            y_edges: y_edges.to_vec(),
            cells,
        })
    }

    /// Self-contained SVG: one rectangle per cell on a linear two-color ramp,
    /// empty cells in grey, and a legend bar.
    pub fn to_svg(&self, title: &str) -> String {
        let (cw, ch) = (40.0, 30.0);
        let (left, top) = (60.0, 40.0);
        let w = left + cw * self.nx() as f64 + 120.0;
        let h = top + ch * self.ny() as f64 + 50.0;
        let filled: Vec<f64> = self.cells.iter().filter(|c| c.count > 0).map(|c| c.mean_uncertainty).collect();
        let lo = filled.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = filled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };

        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#);
        let _ = writeln!(s, r#"<text x="{left}" y="20" font-size="14">{}</text>"#, escape(title));
        for i in 0..self.nx() {
            for j in 0..self.ny() {
                let c = self.cell(i, j);
                let x = left + cw * i as f64;
                // y grows upward on screen.
                let y = top + ch * (self.ny() - 1 - j) as f64;
                let fill = if c.count == 0 {
                    "#d0d0d0".to_string()
                } else {
                    ramp((c.mean_uncertainty - lo) / span)
                };
                let _ = writeln!(
                    s,
                    r#"<rect x="{x}" y="{y}" width="{cw}" height="{ch}" fill="{fill}" stroke="white"><title>n={} u={:.4e} speed={:.3}</title></rect>"#,
                    c.count, c.mean_uncertainty, c.mean_speed
                );
            }
        }
        let base = top + ch * self.ny() as f64;
        for (i, e) in self.x_edges.iter().enumerate() {
            let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{e:.2}</text>"#, left + cw * i as f64, base + 15.0);
        }
        for (j, e) in self.y_edges.iter().enumerate() {
            let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{e:.2}</text>"#, left - 5.0, base - ch * j as f64 + 4.0);
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">x</text>"#, left + cw * self.nx() as f64 / 2.0, base + 32.0);
        let _ = writeln!(s, r#"<text x="15" y="{}">y</text>"#, top + ch * self.ny() as f64 / 2.0);

        let lx = left + cw * self.nx() as f64 + 30.0;
        let steps = 20;
        let lh = ch * self.ny() as f64 / steps as f64;
        for k in 0..steps {
            let t = k as f64 / (steps - 1) as f64;
            let y = top + lh * (steps - 1 - k) as f64;
            let _ = writeln!(s, r#"<rect x="{lx}" y="{y}" width="20" height="{lh}" fill="{}"/>"#, ramp(t));
        }
        if !filled.is_empty() {
            let _ = writeln!(s, r#"<text x="{}" y="{}">{hi:.3e}</text>"#, lx + 25.0, top + 10.0);
            let _ = writeln!(s, r#"<text x="{}" y="{}">{lo:.3e}</text>"#, lx + 25.0, base);
        }
        s.push_str("</svg>\n");
        s
    }
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Linear interpolation from dark blue (0) to yellow (1).
fn ramp(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(30.0, 250.0), lerp(30.0, 230.0), lerp(110.0, 40.0))
}

fn actions_for(states: &Matrix, dataset_actions: Option<&Matrix>, source: ActionSource) -> Result<Matrix> {
    match source {
        ActionSource::Dataset => dataset_actions
            .cloned()
            .ok_or_else(|| Error::contract("dataset actions requested without a dataset")),
        ActionSource::Policy(p) => p.mean_action(states),
        ActionSource::Fixed(a) => Ok(Matrix::row_vector(&a).tile_rows(states.rows())),
    }
}

/// Average uncertainty per displacement bin over the dataset's states.
pub fn uncertainty_heatmap(
    unc: &UncertaintySource,
    dataset: &Dataset,
    actions: ActionSource,
    x_edges: &[f64],
    y_edges: &[f64],
) -> Result<HeatmapGrid> {
    if dataset.is_empty() {
        return Err(Error::contract("heatmap of an empty dataset"));
    }
    let states = dataset.states();
    let acts = actions_for(&states, Some(&dataset.actions()), actions)?;
    let values = unc.variances(&states.hconcat(&acts)?)?;
    let ss: Vec<LanderState> = dataset.transitions.iter().map(|t| t.s).collect();
    HeatmapGrid::accumulate(x_edges, y_edges, &ss, &values)
}

/// Uncertainty at bin centers with zero velocity.
pub fn grid_heatmap(unc: &UncertaintySource, actions: ActionSource, x_edges: &[f64], y_edges: &[f64]) -> Result<HeatmapGrid> {
    check_edges(x_edges, "x")?;
    check_edges(y_edges, "y")?;
    let mut ss = Vec::new();
    for xw in x_edges.windows(2) {
        for yw in y_edges.windows(2) {
            ss.push(LanderState::new(0.5 * (xw[0] + xw[1]), 0.5 * (yw[0] + yw[1]), 0.0, 0.0));
        }
    }
    let data: Vec<f64> = ss.iter().flat_map(|s| s.to_array()).collect();
    let states = Matrix::from_vec(ss.len(), STATE_DIM, data)?;
    let acts = actions_for(&states, None, actions)?;
    let values = unc.variances(&states.hconcat(&acts)?)?;
    HeatmapGrid::accumulate(x_edges, y_edges, &ss, &values)
}

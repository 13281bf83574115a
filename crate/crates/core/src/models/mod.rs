//! The three trainable architectures: per-station-token transformer, MPNN on
//! the heterogeneous graph, and a per-station MLP baseline. All share the
//! embed / predict structure: two-layer MLP embedders, two-layer MLP heads,
//! MSE loss over normalized targets.

mod params;

pub use params::{init_mlp2, init_weight, mlp2, BoundParams, ParamSet};

use crate::data::{grid_window_len, GridSource, NormStats, Sample, N_VARS};
use crate::diff::{Array, NodeId, Tape};
use crate::error::{Error, Result};
use crate::geometry::HeteroGraph;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Transformer,
    Mpnn,
    Mlp,
}

impl ModelKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transformer" => Ok(ModelKind::Transformer),
            "mpnn" | "gnn" => Ok(ModelKind::Mpnn),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(Error::Validation(format!("unknown model kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Transformer => write!(f, "transformer"),
            ModelKind::Mpnn => write!(f, "mpnn"),
            ModelKind::Mlp => write!(f, "mlp"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    /// Each station token carries the window of its nearest grid cell.
    Nearest,
    /// The k linked cells' windows are stacked into the token.
    StackedK,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformerConfig {
    pub d: usize,
    pub n_heads: usize,
    pub n_blocks: usize,
    /// FFN hidden width; 0 means 4*d.
    pub ffn_width: usize,
    /// Embedder hidden width; 0 means d.
    pub embed_hidden: usize,
    /// Prediction head hidden width; 0 means d.
    pub head_hidden: usize,
    pub pos_width: usize,
    pub grid_mode: GridMode,
    /// Scale attention scores by 1/sqrt(d) instead of 1/sqrt(d/h).
    pub scale_by_full_d: bool,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        Self {
            d: 128,
            n_heads: 4,
            n_blocks: 4,
            ffn_width: 0,
            embed_hidden: 0,
            head_hidden: 0,
            pos_width: 16,
            grid_mode: GridMode::Nearest,
            scale_by_full_d: false,
        }
    }
}

impl TransformerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n_heads == 0 || self.n_blocks == 0 || self.pos_width == 0 {
            return Err(Error::Config("transformer dimensions must be positive".into()));
        }
        if self.d % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "token dimension {} not divisible by {} heads",
                self.d, self.n_heads
            )));
        }
        if self.ffn() < self.d {
            return Err(Error::Config(format!(
                "ffn width {} must be at least d = {}",
                self.ffn(),
                self.d
            )));
        }
        Ok(())
    }

    pub fn ffn(&self) -> usize {
        if self.ffn_width == 0 {
            4 * self.d
        } else {
            self.ffn_width
        }
    }

    pub fn embed(&self) -> usize {
        if self.embed_hidden == 0 {
            self.d
        } else {
            self.embed_hidden
        }
    }

    pub fn head(&self) -> usize {
        if self.head_hidden == 0 {
            self.d
        } else {
            self.head_hidden
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpnnConfig {
    pub latent: usize,
    pub hidden: usize,
    pub n_station_passes: usize,
}

impl Default for MpnnConfig {
    fn default() -> Self {
        Self {
            latent: 128,
            hidden: 128,
            n_station_passes: 4,
        }
    }
}

impl MpnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent == 0 || self.hidden == 0 {
            return Err(Error::Config("mpnn widths must be positive".into()));
        }
        if self.n_station_passes == 0 {
            return Err(Error::Config("n_station_passes must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub latent: usize,
    pub hidden: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            latent: 128,
            hidden: 128,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub transformer: TransformerConfig,
    pub mpnn: MpnnConfig,
    pub mlp: MlpConfig,
}

/// Everything that fixes the parameter shapes of one trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub back_hours: u32,
    pub lead: u32,
    pub grid_source: Option<GridSource>,
    /// Grid links per station (graph k); fixes stacked-token widths.
    pub k: usize,
}

impl ModelSpec {
    pub fn history_width(&self) -> usize {
        (self.back_hours as usize + 1) * N_VARS
    }

    /// Grid window width per cell, after HRRR-F truncation.
    pub fn grid_width(&self) -> Option<usize> {
        self.grid_source
            .map(|src| grid_window_len(self.back_hours, self.lead, src) * N_VARS)
    }
}

/// Graph-derived index plans shared by every forward pass.
pub struct GraphPlan {
    pub n_stations: usize,
    pub n_active_cells: usize,
    pub k: usize,
    station_coords: Array,
    active_cell_coords: Array,
    nearest_active: Vec<usize>,
    link_station: Vec<usize>,
    link_active: Vec<usize>,
    link_bounds: Vec<usize>,
    link_coord_diff: Array,
    edge_from: Vec<usize>,
    edge_to: Vec<usize>,
    edge_bounds: Vec<usize>,
    edge_coord_diff: Option<Array>,
}

impl GraphPlan {
    pub fn new(graph: &HeteroGraph) -> Self {
        let n = graph.n_stations();
        let std_station: Vec<(f64, f64)> = graph
            .station_coords
            .iter()
            .map(|&p| graph.standardize(p))
            .collect();
        let std_active: Vec<(f64, f64)> = graph
            .active_cells
            .iter()
            .map(|&c| graph.standardize(graph.cell_coords[c]))
            .collect();
        let station_coords = Array::matrix(
            n,
            2,
            std_station.iter().flat_map(|p| [p.0, p.1]).collect(),
        )
        .unwrap();
        let active_cell_coords = Array::matrix(
            std_active.len().max(1),
            2,
            if std_active.is_empty() {
                vec![0.0, 0.0]
            } else {
                std_active.iter().flat_map(|p| [p.0, p.1]).collect()
            },
        )
        .unwrap();

        let nearest_active: Vec<usize> = (0..n)
            .map(|i| graph.active_index(graph.nearest(i)))
            .collect();

        let mut link_station = Vec::with_capacity(n * graph.k);
        let mut link_active = Vec::with_capacity(n * graph.k);
        let mut link_coord = Vec::with_capacity(n * graph.k * 2);
        let mut link_bounds = vec![0];
        for i in 0..n {
            for &cell in &graph.grid_links[i] {
                link_station.push(i);
                let a = graph.active_index(cell);
                link_active.push(a);
                link_coord.push(std_station[i].0 - std_active[a].0);
                link_coord.push(std_station[i].1 - std_active[a].1);
            }
            link_bounds.push(link_active.len());
        }
        let link_coord_diff =
            Array::matrix(link_active.len().max(1), 2, if link_active.is_empty() {
                vec![0.0, 0.0]
            } else {
                link_coord
            })
            .unwrap();

        let nbrs = graph.neighbor_lists();
        let mut edge_from = Vec::new();
        let mut edge_to = Vec::new();
        let mut edge_coord = Vec::new();
        let mut edge_bounds = vec![0];
        for i in 0..n {
            for &j in &nbrs[i] {
                edge_from.push(i);
                edge_to.push(j);
                edge_coord.push(std_station[i].0 - std_station[j].0);
                edge_coord.push(std_station[i].1 - std_station[j].1);
            }
            edge_bounds.push(edge_from.len());
        }
        let edge_coord_diff = if edge_from.is_empty() {
            None
        } else {
            Some(Array::matrix(edge_from.len(), 2, edge_coord).unwrap())
        };

        Self {
            n_stations: n,
            n_active_cells: graph.active_cells.len(),
            k: graph.k,
            station_coords,
            active_cell_coords,
            nearest_active,
            link_station,
            link_active,
            link_bounds,
            link_coord_diff,
            edge_from,
            edge_to,
            edge_bounds,
            edge_coord_diff,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: ParamSet,
}

impl Model {
    /// Build parameters for the spec with uniform 1/sqrt(fan_in) init.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        let params = build_params(&spec, seed)?;
        Ok(Self { spec, params })
    }

    pub fn forward(&self, tape: &mut Tape, sample: &Sample, plan: &GraphPlan) -> Result<NodeId> {
        let bound = self.params.bind(tape)?;
        self.forward_bound(tape, &bound, sample, plan)
    }

    fn check_sample(&self, sample: &Sample, plan: &GraphPlan) -> Result<()> {
        if sample.n_stations != plan.n_stations {
            return Err(Error::Config(format!(
                "sample has {} stations but the graph has {}",
                sample.n_stations, plan.n_stations
            )));
        }
        let hist_w = self.spec.history_width();
        if sample.station_history.len() != sample.n_stations * hist_w {
            return Err(Error::Config(format!(
                "history width mismatch: expected {hist_w} values per station, got {}",
                sample.station_history.len() / sample.n_stations.max(1)
            )));
        }
        match (self.spec.grid_width(), &sample.grid_block) {
            (Some(gw), Some(block)) => {
                let expected = plan.n_active_cells * gw;
                if block.len() != expected {
                    return Err(Error::Config(format!(
                        "grid block mismatch: expected {} active cells x width {gw} = {expected}, got {}",
                        plan.n_active_cells,
                        block.len()
                    )));
                }
            }
            (None, None) => {}
            (Some(_), None) => {
                return Err(Error::Config(
                    "model wants a gridded input but the sample has none".into(),
                ))
            }
            (None, Some(_)) => {
                return Err(Error::Config(
                    "sample carries a grid block but the model takes none".into(),
                ))
            }
        }
        Ok(())
    }

    pub fn forward_bound(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        sample: &Sample,
        plan: &GraphPlan,
    ) -> Result<NodeId> {
        self.check_sample(sample, plan)?;
        let n = sample.n_stations;
        let hist = tape.constant(Array::matrix(
            n,
            self.spec.history_width(),
            sample.station_history.clone(),
        )?)?;
        let grid = match (&sample.grid_block, self.spec.grid_width()) {
            (Some(block), Some(gw)) => Some(tape.constant(Array::matrix(
                plan.n_active_cells,
                gw,
                block.clone(),
            )?)?),
            _ => None,
        };
        let coords = tape.constant(plan.station_coords.clone())?;

        match self.spec.kind {
            ModelKind::Transformer => self.forward_transformer(tape, bound, hist, grid, coords, plan),
            ModelKind::Mpnn => self.forward_mpnn(tape, bound, hist, grid, coords, sample, plan),
            ModelKind::Mlp => self.forward_mlp(tape, bound, hist, grid, coords, plan),
        }
    }

    fn forward_transformer(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        hist: NodeId,
        grid: Option<NodeId>,
        coords: NodeId,
        plan: &GraphPlan,
    ) -> Result<NodeId> {
        let cfg = &self.spec.config.transformer;
        // token input: station history, optionally with grid windows attached
        let tok_in = match grid {
            None => hist,
            Some(g) => match cfg.grid_mode {
                GridMode::Nearest => {
                    let near = tape.gather_rows(g, &plan.nearest_active)?;
                    tape.concat_cols(&[hist, near])?
                }
                GridMode::StackedK => {
                    let mut parts = vec![hist];
                    for pos in 0..plan.k {
                        let idx: Vec<usize> = (0..plan.n_stations)
                            .map(|i| plan.link_active[i * plan.k + pos])
                            .collect();
                        parts.push(tape.gather_rows(g, &idx)?);
                    }
                    tape.concat_cols(&parts)?
                }
            },
        };
        let tok = mlp2(tape, bound, "embed", tok_in)?;
        let pos = mlp2(tape, bound, "pos", coords)?;
        let cat = tape.concat_cols(&[tok, pos])?;
        let mut x = tape.matmul(cat, bound.id("in_proj.w")?)?;
        x = tape.add_row_bias(x, bound.id("in_proj.b")?)?;

        let dk = cfg.d / cfg.n_heads;
        let scale = if cfg.scale_by_full_d {
            1.0 / (cfg.d as f64).sqrt()
        } else {
            1.0 / (dk as f64).sqrt()
        };
        for b in 0..cfg.n_blocks {
            let p = |s: &str| format!("block{b}.{s}");
            let q = tape.matmul(x, bound.id(&p("wq"))?)?;
            let kk = tape.matmul(x, bound.id(&p("wk"))?)?;
            let v = tape.matmul(x, bound.id(&p("wv"))?)?;
            let mut heads = Vec::with_capacity(cfg.n_heads);
            for h in 0..cfg.n_heads {
                let (lo, hi) = (h * dk, (h + 1) * dk);
                let qh = tape.slice_cols(q, lo, hi)?;
                let kh = tape.slice_cols(kk, lo, hi)?;
                let vh = tape.slice_cols(v, lo, hi)?;
                let kt = tape.transpose(kh)?;
                let scores = tape.matmul(qh, kt)?;
                let scores = tape.scale(scores, scale)?;
                let attn = tape.softmax_rows(scores)?;
                heads.push(tape.matmul(attn, vh)?);
            }
            let merged = tape.concat_cols(&heads)?;
            let mha = tape.matmul(merged, bound.id(&p("wo"))?)?;
            let res = tape.add(x, mha)?;
            x = tape.layer_norm(
                res,
                bound.id(&p("ln1.gain"))?,
                bound.id(&p("ln1.bias"))?,
                1e-5,
            )?;
            let f = mlp2(tape, bound, &p("ffn"), x)?;
            let res = tape.add(x, f)?;
            x = tape.layer_norm(
                res,
                bound.id(&p("ln2.gain"))?,
                bound.id(&p("ln2.bias"))?,
                1e-5,
            )?;
        }
        mlp2(tape, bound, "head", x)
    }

    fn forward_mpnn(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        hist: NodeId,
        grid: Option<NodeId>,
        coords: NodeId,
        sample: &Sample,
        plan: &GraphPlan,
    ) -> Result<NodeId> {
        let cfg = &self.spec.config.mpnn;
        let alpha_in = tape.concat_cols(&[hist, coords])?;
        let mut f = mlp2(tape, bound, "alpha", alpha_in)?;

        let h = match grid {
            Some(g) => {
                let cell_coords = tape.constant(plan.active_cell_coords.clone())?;
                let psi_in = tape.concat_cols(&[g, cell_coords])?;
                Some(mlp2(tape, bound, "psi", psi_in)?)
            }
            None => None,
        };

        if let Some(h) = h {
            f = self.grid_pass(tape, bound, 0, f, h, plan)?;
        }
        for p in 0..cfg.n_station_passes {
            f = self.station_pass(tape, bound, p, f, hist, sample, plan)?;
        }
        if let Some(h) = h {
            f = self.grid_pass(tape, bound, 1, f, h, plan)?;
        }
        mlp2(tape, bound, "phi", f)
    }

    /// Station feature update from linked grid cells: per-link messages,
    /// mean over each station's links, residual update with the nearest
    /// linked cell's latent alongside.
    fn grid_pass(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        pass: usize,
        f: NodeId,
        h: NodeId,
        plan: &GraphPlan,
    ) -> Result<NodeId> {
        let prefix = format!("gridpass{pass}");
        let h_rows = tape.gather_rows(h, &plan.link_active)?;
        let f_rows = tape.gather_rows(f, &plan.link_station)?;
        let dcoord = tape.constant(plan.link_coord_diff.clone())?;
        let msg_in = tape.concat_cols(&[h_rows, f_rows, dcoord])?;
        let msg = mlp2(tape, bound, &format!("{prefix}.chi"), msg_in)?;
        let mean = tape.segment_mean_rows(msg, &plan.link_bounds)?;
        let h_near = tape.gather_rows(h, &plan.nearest_active)?;
        let upd_in = tape.concat_cols(&[f, h_near, mean])?;
        let upd = mlp2(tape, bound, &format!("{prefix}.omega"), upd_in)?;
        tape.add(f, upd)
    }

    /// One round of station-to-station message passing with per-pass
    /// parameters; stations with no neighbors receive a zero mean message.
    fn station_pass(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        pass: usize,
        f: NodeId,
        _hist: NodeId,
        sample: &Sample,
        plan: &GraphPlan,
    ) -> Result<NodeId> {
        let latent = self.spec.config.mpnn.latent;
        let mean = if plan.edge_from.is_empty() {
            tape.constant(Array::zeros(plan.n_stations, latent))?
        } else {
            let fi = tape.gather_rows(f, &plan.edge_from)?;
            let fj = tape.gather_rows(f, &plan.edge_to)?;
            let hw = self.spec.history_width();
            let mut wdiff = Vec::with_capacity(plan.edge_from.len() * hw);
            for (&i, &j) in plan.edge_from.iter().zip(&plan.edge_to) {
                let wi = &sample.station_history[i * hw..(i + 1) * hw];
                let wj = &sample.station_history[j * hw..(j + 1) * hw];
                wdiff.extend(wi.iter().zip(wj).map(|(a, b)| a - b));
            }
            let wdiff = tape.constant(Array::matrix(plan.edge_from.len(), hw, wdiff)?)?;
            let dcoord = tape.constant(plan.edge_coord_diff.clone().unwrap())?;
            let msg_in = tape.concat_cols(&[fi, fj, wdiff, dcoord])?;
            let msg = mlp2(tape, bound, &format!("pass{pass}.beta"), msg_in)?;
            tape.segment_mean_rows(msg, &plan.edge_bounds)?
        };
        let upd_in = tape.concat_cols(&[f, mean])?;
        let upd = mlp2(tape, bound, &format!("pass{pass}.gamma"), upd_in)?;
        tape.add(f, upd)
    }

    fn forward_mlp(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        hist: NodeId,
        grid: Option<NodeId>,
        coords: NodeId,
        plan: &GraphPlan,
    ) -> Result<NodeId> {
        let alpha_in = tape.concat_cols(&[hist, coords])?;
        let f = mlp2(tape, bound, "alpha", alpha_in)?;
        let trunk_in = match grid {
            Some(g) => {
                let near = tape.gather_rows(g, &plan.nearest_active)?;
                let cell_coords = tape.constant(plan.active_cell_coords.clone())?;
                let near_coords = tape.gather_rows(cell_coords, &plan.nearest_active)?;
                let psi_in = tape.concat_cols(&[near, near_coords])?;
                let h = mlp2(tape, bound, "psi", psi_in)?;
                tape.concat_cols(&[f, h])?
            }
            None => f,
        };
        let t = mlp2(tape, bound, "trunk", trunk_in)?;
        mlp2(tape, bound, "phi", t)
    }

    /// MSE over all stations and all four normalized target variables.
    pub fn loss_node(
        &self,
        tape: &mut Tape,
        pred: NodeId,
        sample: &Sample,
    ) -> Result<NodeId> {
        let target = tape.constant(Array::matrix(
            sample.n_stations,
            N_VARS,
            sample.target_norm.clone(),
        )?)?;
        let diff = tape.sub(pred, target)?;
        let sq = tape.mul(diff, diff)?;
        tape.mean_all(sq)
    }

    pub fn sample_loss(&self, sample: &Sample, plan: &GraphPlan) -> Result<f64> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape)?;
        let pred = self.forward_bound(&mut tape, &bound, sample, plan)?;
        let loss = self.loss_node(&mut tape, pred, sample)?;
        Ok(tape.value(loss).data()[0])
    }

    /// Loss and per-parameter gradients for one sample.
    pub fn sample_loss_grads(
        &self,
        sample: &Sample,
        plan: &GraphPlan,
    ) -> Result<(f64, Vec<Array>)> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape)?;
        let pred = self.forward_bound(&mut tape, &bound, sample, plan)?;
        let loss = self.loss_node(&mut tape, pred, sample)?;
        let mut grads = tape.backward(loss)?;
        let out = bound
            .ids()
            .iter()
            .map(|&id| grads.take_or_zeros(id, &tape))
            .collect();
        Ok((tape.value(loss).data()[0], out))
    }

    /// Mean loss and mean gradients over a batch. Samples are processed in
    /// parallel; the reduction runs in fixed (index) order so results are
    /// bitwise reproducible.
    pub fn batch_loss_grads(
        &self,
        samples: &[Sample],
        plan: &GraphPlan,
    ) -> Result<(f64, Vec<Array>)> {
        if samples.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let per: Vec<Result<(f64, Vec<Array>)>> = samples
            .par_iter()
            .map(|s| self.sample_loss_grads(s, plan))
            .collect();
        let mut total_loss = 0.0;
        let mut acc: Option<Vec<Array>> = None;
        for r in per {
            let (loss, grads) = r?;
            total_loss += loss;
            match &mut acc {
                None => acc = Some(grads),
                Some(a) => {
                    for (dst, src) in a.iter_mut().zip(&grads) {
                        for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
                            *d += s;
                        }
                    }
                }
            }
        }
        let inv = 1.0 / samples.len() as f64;
        let mut grads = acc.unwrap();
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= inv;
            }
        }
        Ok((total_loss * inv, grads))
    }

    pub fn batch_loss(&self, samples: &[Sample], plan: &GraphPlan) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let per: Vec<Result<f64>> = samples
            .par_iter()
            .map(|s| self.sample_loss(s, plan))
            .collect();
        let mut total = 0.0;
        for r in per {
            total += r?;
        }
        Ok(total / samples.len() as f64)
    }

    /// Normalized predictions `[N*4]` for one sample.
    pub fn predict_norm(&self, sample: &Sample, plan: &GraphPlan) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape)?;
        let pred = self.forward_bound(&mut tape, &bound, sample, plan)?;
        Ok(tape.value(pred).data().to_vec())
    }

    /// Denormalized predictions `[N*4]` in physical units.
    pub fn predict(&self, sample: &Sample, plan: &GraphPlan, stats: &NormStats) -> Result<Vec<f64>> {
        let mut out = self.predict_norm(sample, plan)?;
        for (i, v) in out.iter_mut().enumerate() {
            *v = stats.denormalize_station(i % N_VARS, *v);
        }
        Ok(out)
    }
}

fn build_params(spec: &ModelSpec, seed: u64) -> Result<ParamSet> {
    let mut ps = ParamSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hist_w = spec.history_width();
    let grid_w = spec.grid_width();

    match spec.kind {
        ModelKind::Transformer => {
            let cfg = &spec.config.transformer;
            cfg.validate()?;
            let grid_part = match (grid_w, cfg.grid_mode) {
                (None, _) => 0,
                (Some(w), GridMode::Nearest) => w,
                (Some(w), GridMode::StackedK) => w * spec.k,
            };
            init_mlp2(&mut ps, &mut rng, "embed", hist_w + grid_part, cfg.embed(), cfg.d)?;
            init_mlp2(&mut ps, &mut rng, "pos", 2, cfg.pos_width, cfg.pos_width)?;
            ps.add(
                "in_proj.w",
                init_weight(&mut rng, cfg.d + cfg.pos_width, cfg.d),
            )?;
            ps.add("in_proj.b", Array::zeros(1, cfg.d))?;
            for b in 0..cfg.n_blocks {
                let p = |s: &str| format!("block{b}.{s}");
                for w in ["wq", "wk", "wv", "wo"] {
                    ps.add(&p(w), init_weight(&mut rng, cfg.d, cfg.d))?;
                }
                ps.add(&p("ln1.gain"), Array::filled(1, cfg.d, 1.0))?;
                ps.add(&p("ln1.bias"), Array::zeros(1, cfg.d))?;
                init_mlp2(&mut ps, &mut rng, &p("ffn"), cfg.d, cfg.ffn(), cfg.d)?;
                ps.add(&p("ln2.gain"), Array::filled(1, cfg.d, 1.0))?;
                ps.add(&p("ln2.bias"), Array::zeros(1, cfg.d))?;
            }
            init_mlp2(&mut ps, &mut rng, "head", cfg.d, cfg.head(), N_VARS)?;
        }
        ModelKind::Mpnn => {
            let cfg = &spec.config.mpnn;
            cfg.validate()?;
            init_mlp2(&mut ps, &mut rng, "alpha", hist_w + 2, cfg.hidden, cfg.latent)?;
            if let Some(gw) = grid_w {
                init_mlp2(&mut ps, &mut rng, "psi", gw + 2, cfg.hidden, cfg.latent)?;
                for pass in 0..2 {
                    init_mlp2(
                        &mut ps,
                        &mut rng,
                        &format!("gridpass{pass}.chi"),
                        2 * cfg.latent + 2,
                        cfg.hidden,
                        cfg.latent,
                    )?;
                    init_mlp2(
                        &mut ps,
                        &mut rng,
                        &format!("gridpass{pass}.omega"),
                        3 * cfg.latent,
                        cfg.hidden,
                        cfg.latent,
                    )?;
                }
            }
            for pass in 0..cfg.n_station_passes {
                init_mlp2(
                    &mut ps,
                    &mut rng,
                    &format!("pass{pass}.beta"),
                    2 * cfg.latent + hist_w + 2,
                    cfg.hidden,
                    cfg.latent,
                )?;
                init_mlp2(
                    &mut ps,
                    &mut rng,
                    &format!("pass{pass}.gamma"),
                    2 * cfg.latent,
                    cfg.hidden,
                    cfg.latent,
                )?;
            }
            init_mlp2(&mut ps, &mut rng, "phi", cfg.latent, cfg.hidden, N_VARS)?;
        }
        ModelKind::Mlp => {
            let cfg = &spec.config.mlp;
            if cfg.latent == 0 || cfg.hidden == 0 {
                return Err(Error::Config("mlp widths must be positive".into()));
            }
            init_mlp2(&mut ps, &mut rng, "alpha", hist_w + 2, cfg.hidden, cfg.latent)?;
            let trunk_in = if let Some(gw) = grid_w {
                init_mlp2(&mut ps, &mut rng, "psi", gw + 2, cfg.hidden, cfg.latent)?;
                2 * cfg.latent
            } else {
                cfg.latent
            };
            init_mlp2(&mut ps, &mut rng, "trunk", trunk_in, cfg.hidden, cfg.latent)?;
            init_mlp2(&mut ps, &mut rng, "phi", cfg.latent, cfg.hidden, N_VARS)?;
        }
    }
    Ok(ps)
}

#[cfg(test)]
mod tests;

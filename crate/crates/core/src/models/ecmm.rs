use std::fmt;
use std::str::FromStr;

use super::{
    all_fields, check_labels, Batch, Embeddings, Mlp, MlpCache, Model, ModelKind, PredictionHeads,
};
use crate::error::{Error, Result};
use crate::gates::{feature_gate_backward, feature_gate_with_mask, HardConcrete, HardConcreteGate};
use crate::numerics::{
    bce_grad, bce_loss, bce_with_logit, clamp_prob, init, pairwise_sum, sigmoid, CompensatedSum,
    ParameterSet, RngStream, Tensor2D, PROB_EPS,
};
use crate::sim::FeatureSchema;

pub const SHARED_WIDTH: usize = 64;
pub const SUBNET_WIDTH: usize = 32;
pub const TOWER_HIDDEN: usize = 16;
pub const FIRST_SUBNETS: usize = 8;
pub const SECOND_SUBNETS: usize = 4;
pub const INIT_LOG_ALPHA: f64 = 2.0;
/// Initial tower output bias, `−ln 3`, so every head starts at 1/4 and
/// `t1 + t2` starts at 1/2, away from the clamp.
pub const TOWER_BIAS_INIT: f64 = -1.098_612_288_668_109_8;
const ROUTE_FLOOR: f64 = 1e-8;

/// Where hard-concrete gates sit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GatePlacement {
    /// Gates on the 8→4 routing and on every sub-network→tower connection.
    RoutingAndTowers,
    /// Gates on the 8→4 routing only.
    RoutingOnly,
}

impl GatePlacement {
    pub fn name(self) -> &'static str {
        match self {
            GatePlacement::RoutingAndTowers => "routing_and_towers",
            GatePlacement::RoutingOnly => "routing_only",
        }
    }
}

impl fmt::Display for GatePlacement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GatePlacement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "routing_and_towers" => Ok(GatePlacement::RoutingAndTowers),
            "routing_only" => Ok(GatePlacement::RoutingOnly),
            _ => Err(Error::Config(format!("unknown gate placement `{s}`"))),
        }
    }
}

/// How gate values are produced in a forward pass.
#[derive(Clone, Copy, Debug)]
pub enum GateMode<'a> {
    /// Training draw from frozen uniforms, one per gate.
    Sampled(&'a [f64]),
    /// Noise-free test-time gate.
    Deterministic,
    /// Every gate at exactly 1.
    ForcedOpen,
}

/// Scalar-weighted connections from `n_src` sub-networks to `n_dst` inputs.
#[derive(Clone, Debug)]
struct Routing {
    name: &'static str,
    n_src: usize,
    n_dst: usize,
    gated: bool,
}

struct RouteCache {
    a: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    dz: Vec<f64>,
    denom: Vec<f64>,
    floored: Vec<bool>,
    w: Vec<f64>,
}

impl Routing {
    fn weight_name(&self) -> String {
        format!("{}.r", self.name)
    }

    fn alpha_name(&self) -> String {
        format!("{}.log_alpha", self.name)
    }

    fn n_gates(&self) -> usize {
        if self.gated {
            self.n_src * self.n_dst
        } else {
            0
        }
    }

    fn init(&self, params: &mut ParameterSet) {
        params.insert(
            self.weight_name(),
            Tensor2D::filled(self.n_src, self.n_dst, 1.0),
        );
        if self.gated {
            params.insert(
                self.alpha_name(),
                Tensor2D::filled(self.n_src, self.n_dst, INIT_LOG_ALPHA),
            );
        }
    }

    fn gates(&self, params: &ParameterSet, hc: HardConcrete) -> Result<Vec<HardConcreteGate>> {
        if !self.gated {
            return Ok(Vec::new());
        }
        Ok(params
            .get(&self.alpha_name())?
            .data()
            .iter()
            .map(|&la| HardConcreteGate::new(la, hc))
            .collect())
    }

    /// Gate values and `∂z/∂log α` per connection (row-major `src × dst`).
    fn gate_values(
        &self,
        params: &ParameterSet,
        hc: HardConcrete,
        mode: GateMode<'_>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.n_src * self.n_dst;
        if !self.gated {
            return Ok((vec![1.0; n], vec![0.0; n]));
        }
        let gates = self.gates(params, hc)?;
        let mut z = Vec::with_capacity(n);
        let mut dz = Vec::with_capacity(n);
        for (k, g) in gates.iter().enumerate() {
            match mode {
                GateMode::Sampled(noise) => {
                    let s = g.sample(noise[k])?;
                    z.push(s.z);
                    dz.push(g.dz_dlog_alpha(&s));
                }
                GateMode::Deterministic => {
                    z.push(g.test_gate());
                    dz.push(g.test_gate_grad());
                }
                GateMode::ForcedOpen => {
                    z.push(1.0);
                    dz.push(0.0);
                }
            }
        }
        Ok((z, dz))
    }

    fn forward(
        &self,
        params: &ParameterSet,
        hc: HardConcrete,
        mode: GateMode<'_>,
        srcs: &[Tensor2D],
    ) -> Result<(Vec<Tensor2D>, RouteCache)> {
        let r = params.get(&self.weight_name())?.data().to_vec();
        let (z, dz) = self.gate_values(params, hc, mode)?;
        let a: Vec<f64> = r.iter().zip(&z).map(|(r, z)| r * z).collect();
        let mut denom = vec![0.0; self.n_dst];
        let mut floored = vec![false; self.n_dst];
        let mut w = vec![0.0; a.len()];
        let mut col = vec![0.0; self.n_src];
        for j in 0..self.n_dst {
            for i in 0..self.n_src {
                col[i] = a[i * self.n_dst + j].abs();
            }
            let s = pairwise_sum(&col);
            floored[j] = s < ROUTE_FLOOR;
            denom[j] = s.max(ROUTE_FLOOR);
            for i in 0..self.n_src {
                w[i * self.n_dst + j] = a[i * self.n_dst + j] / denom[j];
            }
        }
        let (rows, cols) = srcs[0].shape();
        let mut outs = Vec::with_capacity(self.n_dst);
        for j in 0..self.n_dst {
            let mut out = Tensor2D::zeros(rows, cols);
            for (e, o) in out.data_mut().iter_mut().enumerate() {
                for i in 0..self.n_src {
                    col[i] = w[i * self.n_dst + j] * srcs[i].data()[e];
                }
                *o = pairwise_sum(&col);
            }
            outs.push(out);
        }
        Ok((
            outs,
            RouteCache {
                a,
                r,
                z,
                dz,
                denom,
                floored,
                w,
            },
        ))
    }

    /// Returns `∂src_i`; accumulates routing weight and gate gradients.
    fn backward(
        &self,
        cache: &RouteCache,
        srcs: &[Tensor2D],
        d_dst: &[Tensor2D],
        grads: &mut ParameterSet,
    ) -> Result<Vec<Tensor2D>> {
        let nd = self.n_dst;
        let mut d_src: Vec<Tensor2D> = srcs
            .iter()
            .map(|s| Tensor2D::zeros(s.rows(), s.cols()))
            .collect();
        let mut dw = vec![0.0; cache.w.len()];
        for i in 0..self.n_src {
            for j in 0..nd {
                let wij = cache.w[i * nd + j];
                d_src[i].axpy(wij, &d_dst[j])?;
                dw[i * nd + j] = d_dst[j]
                    .data()
                    .iter()
                    .zip(srcs[i].data())
                    .map(|(d, s)| d * s)
                    .sum();
            }
        }
        let mut da = vec![0.0; dw.len()];
        for j in 0..nd {
            let d = cache.denom[j];
            let cross: f64 = (0..self.n_src)
                .map(|i| dw[i * nd + j] * cache.a[i * nd + j])
                .sum();
            for i in 0..self.n_src {
                let k = i * nd + j;
                da[k] = dw[k] / d;
                if !cache.floored[j] {
                    da[k] -= signum(cache.a[k]) * cross / (d * d);
                }
            }
        }
        let gr = grads.get_mut(&self.weight_name())?;
        for (k, g) in gr.data_mut().iter_mut().enumerate() {
            *g += da[k] * cache.z[k];
        }
        if self.gated {
            let ga = grads.get_mut(&self.alpha_name())?;
            for (k, g) in ga.data_mut().iter_mut().enumerate() {
                *g += da[k] * cache.r[k] * cache.dz[k];
            }
        }
        Ok(d_src)
    }
}

fn signum(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Feature gate, shared layer, two routed sub-network layers and sigmoid towers.
#[derive(Clone, Debug)]
pub struct Ecmm {
    emb: Embeddings,
    shared: Mlp,
    sub1: Vec<Mlp>,
    sub2: Vec<Mlp>,
    towers: Vec<Mlp>,
    route1: Routing,
    route2: Routing,
    lambda: f64,
    hc: HardConcrete,
}

struct Forward {
    e: Tensor2D,
    mask: Tensor2D,
    shared: Tensor2D,
    shared_cache: MlpCache,
    sub1_out: Vec<Tensor2D>,
    sub1_cache: Vec<MlpCache>,
    route1: RouteCache,
    sub2_out: Vec<Tensor2D>,
    sub2_cache: Vec<MlpCache>,
    route2: RouteCache,
    tower_cache: Vec<MlpCache>,
    /// `batch × towers` logits.
    logits: Tensor2D,
}

impl Ecmm {
    pub fn new(
        schema: &FeatureSchema,
        towers: usize,
        lambda: f64,
        hc: HardConcrete,
        placement: GatePlacement,
    ) -> Result<Self> {
        if !(3..=4).contains(&towers) {
            return Err(Error::Config(format!(
                "tower count must be 3 or 4, got {towers}"
            )));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be finite and ≥ 0, got {lambda}"
            )));
        }
        hc.validate()?;
        let emb = all_fields(schema);
        let d = emb.out_dim();
        let w = SUBNET_WIDTH;
        Ok(Self {
            shared: Mlp::new("shared", &[d, SHARED_WIDTH], true),
            sub1: (0..FIRST_SUBNETS)
                .map(|i| Mlp::new(format!("sub1.{i}"), &[SHARED_WIDTH, w, w], true))
                .collect(),
            sub2: (0..SECOND_SUBNETS)
                .map(|j| Mlp::new(format!("sub2.{j}"), &[w, w, w], true))
                .collect(),
            towers: (0..towers)
                .map(|t| Mlp::new(format!("tower.{t}"), &[w, TOWER_HIDDEN, 1], false))
                .collect(),
            route1: Routing {
                name: "route1",
                n_src: FIRST_SUBNETS,
                n_dst: SECOND_SUBNETS,
                gated: true,
            },
            route2: Routing {
                name: "route2",
                n_src: SECOND_SUBNETS,
                n_dst: towers,
                gated: placement == GatePlacement::RoutingAndTowers,
            },
            emb,
            lambda,
            hc,
        })
    }

    pub fn towers(&self) -> usize {
        self.towers.len()
    }

    pub fn embeddings(&self) -> &Embeddings {
        &self.emb
    }

    /// All gates, first routing layer then tower connections, row-major.
    pub fn gates(&self, params: &ParameterSet) -> Result<Vec<HardConcreteGate>> {
        let mut g = self.route1.gates(params, self.hc)?;
        g.extend(self.route2.gates(params, self.hc)?);
        Ok(g)
    }

    fn forward(&self, params: &ParameterSet, batch: &Batch, mode: GateMode<'_>) -> Result<Forward> {
        if let GateMode::Sampled(noise) = mode {
            if noise.len() != self.gate_count() {
                return Err(Error::Dimension {
                    op: "ecmm gate noise",
                    left: (noise.len(), 1),
                    right: (self.gate_count(), 1),
                });
            }
        }
        let n1 = self.route1.n_gates();
        let (mode1, mode2) = match mode {
            GateMode::Sampled(noise) => (
                GateMode::Sampled(&noise[..n1]),
                GateMode::Sampled(&noise[n1..]),
            ),
            m => (m, m),
        };
        let e = self.emb.forward(params, batch)?;
        let (gated, mask) = feature_gate_with_mask(&e, params.get("gate.wg")?)?;
        let (shared, shared_cache) = self.shared.forward(params, &gated)?;
        let mut sub1_out = Vec::with_capacity(self.sub1.len());
        let mut sub1_cache = Vec::with_capacity(self.sub1.len());
        for net in &self.sub1 {
            let (o, c) = net.forward(params, &shared)?;
            sub1_out.push(o);
            sub1_cache.push(c);
        }
        let (mid, route1) = self.route1.forward(params, self.hc, mode1, &sub1_out)?;
        let mut sub2_out = Vec::with_capacity(self.sub2.len());
        let mut sub2_cache = Vec::with_capacity(self.sub2.len());
        for (net, x) in self.sub2.iter().zip(&mid) {
            let (o, c) = net.forward(params, x)?;
            sub2_out.push(o);
            sub2_cache.push(c);
        }
        let (tower_in, route2) = self.route2.forward(params, self.hc, mode2, &sub2_out)?;
        let mut logits = Tensor2D::zeros(batch.len, self.towers.len());
        let mut tower_cache = Vec::with_capacity(self.towers.len());
        for (t, (net, x)) in self.towers.iter().zip(&tower_in).enumerate() {
            let (o, c) = net.forward(params, x)?;
            for r in 0..batch.len {
                logits.set(r, t, o.get(r, 0));
            }
            tower_cache.push(c);
        }
        Ok(Forward {
            e,
            mask,
            shared,
            shared_cache,
            sub1_out,
            sub1_cache,
            route1,
            sub2_out,
            sub2_cache,
            route2,
            tower_cache,
            logits,
        })
    }

    /// Head outputs under an explicit gate mode.
    pub fn predict_with(
        &self,
        params: &ParameterSet,
        batch: &Batch,
        mode: GateMode<'_>,
    ) -> Result<Vec<PredictionHeads>> {
        let f = self.forward(params, batch, mode)?;
        Ok((0..batch.len)
            .map(|r| {
                let mut t = [0.0; 4];
                for (k, v) in t.iter_mut().enumerate().take(self.towers.len()) {
                    *v = sigmoid(f.logits.get(r, k));
                }
                PredictionHeads::Towers {
                    t,
                    towers: self.towers.len(),
                }
            })
            .collect())
    }
}

impl Model for Ecmm {
    fn kind(&self) -> ModelKind {
        ModelKind::Ecmm
    }

    fn init_params(&self, rng: &mut RngStream) -> ParameterSet {
        let mut p = ParameterSet::new();
        self.emb.init(&mut p, rng);
        let d = self.emb.out_dim();
        p.insert("gate.wg", init::glorot_uniform(d, d, rng));
        self.shared.init(&mut p, rng);
        for net in self.sub1.iter().chain(&self.sub2).chain(&self.towers) {
            net.init(&mut p, rng);
        }
        for net in &self.towers {
            p.get_mut(&net.bias_name(net.n_layers() - 1))
                .expect("tower initialised above")
                .fill(TOWER_BIAS_INIT);
        }
        self.route1.init(&mut p);
        self.route2.init(&mut p);
        p
    }

    fn gate_count(&self) -> usize {
        self.route1.n_gates() + self.route2.n_gates()
    }

    fn predict(&self, params: &ParameterSet, batch: &Batch) -> Result<Vec<PredictionHeads>> {
        self.predict_with(params, batch, GateMode::Deterministic)
    }

    fn loss(
        &self,
        params: &ParameterSet,
        batch: &Batch,
        noise: &[f64],
        grads: Option<&mut ParameterSet>,
    ) -> Result<f64> {
        check_labels(batch)?;
        let f = self.forward(params, batch, GateMode::Sampled(noise))?;
        let n = batch.len as f64;
        let nt = self.towers.len();
        let mut dl = Tensor2D::zeros(batch.len, nt);
        let mut total = CompensatedSum::default();
        for r in 0..batch.len {
            let (y5, y6) = (batch.y5[r], batch.y6[r]);
            let l = f.logits.row(r);
            let (t1, t2) = (sigmoid(l[0]), sigmoid(l[1]));
            let (l1, g1) = bce_with_logit(y6, l[0]);
            let q = t1 + t2;
            let l2 = bce_loss(y5, clamp_prob(q))?;
            let g2 = if (PROB_EPS..=1.0 - PROB_EPS).contains(&q) {
                bce_grad(y5, q)?
            } else {
                0.0
            };
            total.add(l1);
            total.add(l2);
            let d = dl.row_mut(r);
            d[0] = (g1 + g2 * t1 * (1.0 - t1)) / n;
            d[1] = g2 * t2 * (1.0 - t2) / n;
            if nt == 3 {
                let (l3, g3) = bce_with_logit(1.0 - y5, l[2]);
                total.add(l3);
                d[2] = g3 / n;
            } else {
                let stage = batch.stages[r];
                let y_mid = (y5 == 0.0 && stage >= 3) as u8 as f64;
                let y_low = (stage == 2) as u8 as f64;
                let (l3, g3) = bce_with_logit(y_mid, l[2]);
                let (l4, g4) = bce_with_logit(y_low, l[3]);
                total.add(l3);
                total.add(l4);
                d[2] = g3 / n;
                d[3] = g4 / n;
            }
        }
        let gates = self.gates(params)?;
        let penalty = self.lambda * gates.iter().map(HardConcreteGate::expected_l0).sum::<f64>();

        if let Some(grads) = grads {
            let mut d_tower_in = Vec::with_capacity(nt);
            for (t, net) in self.towers.iter().enumerate() {
                let mut d = Tensor2D::zeros(batch.len, 1);
                for r in 0..batch.len {
                    d.set(r, 0, dl.get(r, t));
                }
                d_tower_in.push(net.backward(params, &f.tower_cache[t], &d, grads)?);
            }
            let d_sub2 = self
                .route2
                .backward(&f.route2, &f.sub2_out, &d_tower_in, grads)?;
            let mut d_mid = Vec::with_capacity(self.sub2.len());
            for (j, net) in self.sub2.iter().enumerate() {
                d_mid.push(net.backward(params, &f.sub2_cache[j], &d_sub2[j], grads)?);
            }
            let d_sub1 = self
                .route1
                .backward(&f.route1, &f.sub1_out, &d_mid, grads)?;
            let mut d_shared = Tensor2D::zeros(f.shared.rows(), f.shared.cols());
            for (i, net) in self.sub1.iter().enumerate() {
                d_shared.add_assign(&net.backward(
                    params,
                    &f.sub1_cache[i],
                    &d_sub1[i],
                    grads,
                )?)?;
            }
            let d_gated = self
                .shared
                .backward(params, &f.shared_cache, &d_shared, grads)?;
            let de = feature_gate_backward(
                &f.e,
                params.get("gate.wg")?,
                &f.mask,
                &d_gated,
                grads.get_mut("gate.wg")?,
            )?;
            self.emb.backward(batch, &de, grads)?;

            if self.lambda > 0.0 {
                let n1 = self.route1.n_gates();
                for (routing, gs) in [(&self.route1, &gates[..n1]), (&self.route2, &gates[n1..])] {
                    if !routing.gated {
                        continue;
                    }
                    let ga = grads.get_mut(&routing.alpha_name())?;
                    for (g, gate) in ga.data_mut().iter_mut().zip(gs) {
                        *g += self.lambda * gate.expected_l0_grad();
                    }
                }
            }
        }
        Ok(total.value() / n + penalty)
    }

    fn gates(&self, params: &ParameterSet) -> Result<Vec<HardConcreteGate>> {
        Ecmm::gates(self, params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testutil::{batch16, gradcheck, small_schema};

    fn model(towers: usize, lambda: f64, placement: GatePlacement) -> Ecmm {
        Ecmm::new(
            &small_schema(),
            towers,
            lambda,
            HardConcrete::default(),
            placement,
        )
        .unwrap()
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (towers, placement) in [
            (3, GatePlacement::RoutingAndTowers),
            (4, GatePlacement::RoutingAndTowers),
            (3, GatePlacement::RoutingOnly),
        ] {
            let m = model(towers, 1e-2, placement);
            let rep = gradcheck(&m, 9);
            assert!(
                rep.max_rel_error < 1e-4,
                "{towers} towers, {placement}: {rep:?}"
            );
        }
    }

    #[test]
    fn gate_counts() {
        assert_eq!(
            model(3, 0.0, GatePlacement::RoutingAndTowers).gate_count(),
            32 + 12
        );
        assert_eq!(
            model(4, 0.0, GatePlacement::RoutingAndTowers).gate_count(),
            32 + 16
        );
        assert_eq!(model(3, 0.0, GatePlacement::RoutingOnly).gate_count(), 32);
        let schema = small_schema();
        assert!(Ecmm::new(
            &schema,
            5,
            0.0,
            HardConcrete::default(),
            GatePlacement::RoutingOnly
        )
        .is_err());
    }

    #[test]
    fn penalty_is_additive() {
        let m0 = model(3, 0.0, GatePlacement::RoutingAndTowers);
        let m1 = model(3, 1e-3, GatePlacement::RoutingAndTowers);
        let p = m0.init_params(&mut RngStream::new(4, "init"));
        let noise = vec![0.37; m0.gate_count()];
        let b = batch16();
        let l0 = m0.loss(&p, &b, &noise, None).unwrap();
        let l1 = m1.loss(&p, &b, &noise, None).unwrap();
        let expected = m1.expected_active_gates(&p).unwrap();
        assert!((l1 - l0 - 1e-3 * expected).abs() < 1e-15);
    }

    #[test]
    fn loss_example() {
        // t=(0.2,0.3,0.5), y5=1, y6=0
        let l =
            bce_loss(0.0, 0.2).unwrap() + bce_loss(1.0, 0.5).unwrap() + bce_loss(0.0, 0.5).unwrap();
        assert!((l - 1.609_437_9).abs() < 1e-7);
    }

    fn route_once(r: &[f64], z_open: bool, srcs: &[Tensor2D]) -> Vec<Tensor2D> {
        let routing = Routing {
            name: "rt",
            n_src: srcs.len(),
            n_dst: 1,
            gated: true,
        };
        let mut p = ParameterSet::new();
        p.insert(
            "rt.r",
            Tensor2D::from_vec(srcs.len(), 1, r.to_vec()).unwrap(),
        );
        p.insert("rt.log_alpha", Tensor2D::filled(srcs.len(), 1, -50.0));
        let mode = if z_open {
            GateMode::ForcedOpen
        } else {
            GateMode::Deterministic
        };
        routing
            .forward(&p, HardConcrete::default(), mode, srcs)
            .unwrap()
            .0
    }

    #[test]
    fn routing_limits() {
        let srcs: Vec<Tensor2D> = (0..4)
            .map(|i| Tensor2D::from_rows(&[&[i as f64, 2.0 * i as f64 + 1.0]]).unwrap())
            .collect();
        // equal weights, open gates: plain average
        let out = route_once(&[1.0; 4], true, &srcs);
        assert_eq!(out[0].data(), &[1.5, 4.0]);
        // a single non-zero weight selects that source
        let out = route_once(&[0.0, 0.0, 1.0, 0.0], true, &srcs);
        assert_eq!(out[0].data(), srcs[2].data());
        // all gates closed: output collapses to zero instead of dividing by zero
        let out = route_once(&[1.0; 4], false, &srcs);
        assert_eq!(out[0].data(), &[0.0, 0.0]);
    }

    #[test]
    fn predicted_etr_bounds_click() {
        let m = model(3, 0.0, GatePlacement::RoutingAndTowers);
        let p = m.init_params(&mut RngStream::new(6, "init"));
        for h in m.predict(&p, &batch16()).unwrap() {
            assert!(h.p_etctr() <= h.p_etr().unwrap() + PROB_EPS);
        }
    }
}

//! Deterministic synthetic tape generator with planted ground truth.
//!
//! Metaorders execute on planted schedules; the latent log-price responds to
//! the aggregate net order flow through a power-law response (so impact
//! tracks global imbalance and concurrent impacts do not add up linearly),
//! plus diffusive noise, with each flow episode relaxing exponentially toward
//! its permanently retained fraction after it ends.

mod oracle;
mod signs;

pub use oracle::{
    brute_force_stats, metaorders_from_labels, naive_active_counts, naive_imbalance,
    naive_sign_acf, OracleError, OracleStats,
};
pub use signs::{fractional_gaussian_noise, long_memory_signs};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tape::{ParsedTape, Side, Tape, TapeMeta, Trade, TraderId, NS_PER_DAY, NS_PER_SEC};

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario field {field}: {message}")]
    InvalidField {
        field: &'static str,
        message: String,
    },
}

fn invalid(field: &'static str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::InvalidField {
        field,
        message: message.into(),
    }
}

/// Planted impact-law parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ImpactLaw {
    /// Dimensionless Y-ratio mean.
    pub y0: f64,
    /// Day-to-day noise on the Y-ratio.
    pub sigma_y: f64,
    /// Flow-response exponent.
    pub delta: f64,
    /// Volatility scale of the response term, per sqrt(day).
    pub impact_sigma_per_sqrt_day: f64,
    /// Diffusive noise scale, per sqrt(day).
    pub noise_sigma_per_sqrt_day: f64,
    /// Fraction of peak impact retained permanently, in [0, 1].
    pub pi_permanent: f64,
    /// Post-execution relaxation time of the metaorder's impact
    /// contribution, in units of its duration. The underlying flow episode
    /// decays faster by the factor delta, since impact scales as
    /// flow^delta.
    pub decay_horizon_mult: f64,
}

impl Default for ImpactLaw {
    fn default() -> Self {
        ImpactLaw {
            y0: 0.9,
            sigma_y: 0.35,
            delta: 0.5,
            impact_sigma_per_sqrt_day: 0.03,
            noise_sigma_per_sqrt_day: 0.03,
            pi_permanent: 0.0,
            decay_horizon_mult: 3.0,
        }
    }
}

/// Child execution schedule.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChildSchedule {
    /// Even spacing in time; `time_jitter` in [0, 1) perturbs interior fill
    /// times by that fraction of the spacing.
    Linear { time_jitter: f64 },
    /// Fill times at `(j / (n-1))^time_exponent` of the duration; exponents
    /// above 1 cluster fills early (concave volume profile).
    FrontLoaded { time_exponent: f64 },
}

/// Metaorder sign process, ordered by start time across the whole market.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignMode {
    Independent,
    LongMemory { gamma: f64 },
}

/// Generator configuration plus planted ground-truth parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticScenario {
    pub seed: u64,
    pub n_traders: u32,
    pub metaorders_per_trader: u32,
    /// Minimum gap between a trader's consecutive metaorders, seconds.
    pub min_gap_secs: f64,
    /// Mean of the exponential extra gap beyond the minimum, seconds.
    pub mean_extra_gap_secs: f64,
    /// Lognormal (mu, sigma) of metaorder size in BTC (of ln size).
    pub size_lognormal: (f64, f64),
    /// Lognormal (mu, sigma) of duration in seconds, for multi-child orders.
    pub duration_lognormal: (f64, f64),
    pub schedule: ChildSchedule,
    /// Probabilities of the child-count buckets {1, 2-4, 5-9, >=10}.
    pub child_count_mix: [f64; 4],
    /// Bounds of the >=10 bucket: children drawn uniformly from
    /// `[bucket4_min_children, max_children]`.
    pub bucket4_min_children: u32,
    pub max_children: u32,
    pub impact: ImpactLaw,
    pub signs: SignMode,
    /// Daily volume normalization of the response, BTC.
    pub base_daily_volume: f64,
    /// Background (non-metaorder) trades per day; they keep participation
    /// rates below 1 and carry the tape through quiet stretches.
    pub background_trades_per_day: f64,
    pub background_volume_lognormal: (f64, f64),
    /// Emit background volume as offsetting buy/sell pairs (1 ns apart), so
    /// it adds market volume but no net signed imbalance.
    pub background_balanced: bool,
    /// Relaxation time for background flow and zero-duration metaorders, s.
    pub background_decay_secs: f64,
    /// Background coverage beyond the first/last metaorder, seconds.
    pub background_pad_secs: f64,
    /// Quoted spread as a fraction of price; None emits no bid/ask.
    pub spread_frac: Option<f64>,
    pub initial_price: f64,
    /// First metaorder arrivals start at this timestamp.
    pub t0_ns: i64,
}

impl Default for SyntheticScenario {
    fn default() -> Self {
        SyntheticScenario {
            seed: 1,
            n_traders: 20,
            metaorders_per_trader: 50,
            min_gap_secs: 7200.0,
            mean_extra_gap_secs: 3600.0,
            size_lognormal: (2.0, 1.3),
            duration_lognormal: (4.5, 0.8),
            schedule: ChildSchedule::Linear { time_jitter: 0.3 },
            child_count_mix: [0.0, 0.2, 0.4, 0.4],
            bucket4_min_children: 10,
            max_children: 30,
            impact: ImpactLaw::default(),
            signs: SignMode::Independent,
            base_daily_volume: 10_000.0,
            background_trades_per_day: 2000.0,
            background_volume_lognormal: (-1.0, 0.8),
            background_balanced: false,
            background_decay_secs: 600.0,
            background_pad_secs: 86_400.0,
            spread_frac: Some(0.006),
            initial_price: 600.0,
            // 2013-01-01T00:00:00Z
            t0_ns: 1_356_998_400 * NS_PER_SEC,
        }
    }
}

impl SyntheticScenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.n_traders == 0 {
            return Err(invalid("n_traders", "must be positive"));
        }
        if self.metaorders_per_trader == 0 {
            return Err(invalid("metaorders_per_trader", "must be positive"));
        }
        if self.min_gap_secs <= 0.0 {
            return Err(invalid("min_gap_secs", "must be positive"));
        }
        if self.mean_extra_gap_secs < 0.0 {
            return Err(invalid("mean_extra_gap_secs", "must be non-negative"));
        }
        if self.size_lognormal.1 < 0.0 {
            return Err(invalid("size_lognormal", "sigma must be non-negative"));
        }
        if self.duration_lognormal.1 < 0.0 {
            return Err(invalid("duration_lognormal", "sigma must be non-negative"));
        }
        let mix_sum: f64 = self.child_count_mix.iter().sum();
        if self.child_count_mix.iter().any(|&p| p < 0.0) || (mix_sum - 1.0).abs() > 1e-9 {
            return Err(invalid(
                "child_count_mix",
                format!("probabilities must be non-negative and sum to 1, got sum {mix_sum}"),
            ));
        }
        if self.bucket4_min_children < 10 {
            return Err(invalid("bucket4_min_children", "must be at least 10"));
        }
        if self.max_children < self.bucket4_min_children {
            return Err(invalid("max_children", "must be at least bucket4_min_children"));
        }
        let law = &self.impact;
        if !(0.0..=1.0).contains(&law.pi_permanent) {
            return Err(invalid("impact.pi_permanent", "must lie in [0, 1]"));
        }
        if law.delta <= 0.0 || law.delta > 1.0 {
            return Err(invalid("impact.delta", "must lie in (0, 1]"));
        }
        if law.y0 <= 0.0 {
            return Err(invalid("impact.y0", "must be positive"));
        }
        if law.sigma_y < 0.0 {
            return Err(invalid("impact.sigma_y", "must be non-negative"));
        }
        if law.impact_sigma_per_sqrt_day < 0.0 || law.noise_sigma_per_sqrt_day < 0.0 {
            return Err(invalid("impact", "volatility scales must be non-negative"));
        }
        if law.decay_horizon_mult <= 0.0 {
            return Err(invalid("impact.decay_horizon_mult", "must be positive"));
        }
        if let SignMode::LongMemory { gamma } = self.signs {
            if !(0.0 < gamma && gamma < 1.0) {
                return Err(invalid("signs.gamma", "must lie in (0, 1)"));
            }
        }
        if self.base_daily_volume <= 0.0 {
            return Err(invalid("base_daily_volume", "must be positive"));
        }
        if self.background_trades_per_day < 0.0 {
            return Err(invalid("background_trades_per_day", "must be non-negative"));
        }
        if self.background_decay_secs <= 0.0 {
            return Err(invalid("background_decay_secs", "must be positive"));
        }
        if self.background_pad_secs < 0.0 {
            return Err(invalid("background_pad_secs", "must be non-negative"));
        }
        if let Some(s) = self.spread_frac {
            if !(0.0..0.5).contains(&s) {
                return Err(invalid("spread_frac", "must lie in [0, 0.5)"));
            }
        }
        if self.initial_price <= 0.0 {
            return Err(invalid("initial_price", "must be positive"));
        }
        Ok(())
    }

    /// Background trades carry fresh trader ids from `n_traders` upward, so
    /// each segments into its own one-shot metaorder.
    pub fn is_background_trader(&self, id: TraderId) -> bool {
        id.0 >= self.n_traders
    }

    /// Planted per-day parameters `(sigma_impact, sigma_noise, y_coef)`;
    /// deterministic in (seed, day).
    pub fn day_params(&self, day_index: i64) -> (f64, f64, f64) {
        let mut rng = substream(self.seed, &format!("day/{day_index}"));
        let eta: f64 = rng.sample(StandardNormal);
        let y_coef = self.impact.y0 + self.impact.sigma_y * eta;
        (
            self.impact.impact_sigma_per_sqrt_day,
            self.impact.noise_sigma_per_sqrt_day,
            y_coef,
        )
    }

    /// Dimensional impact prefactor in force on a day: the response is
    /// `y_tilde * |flow|^delta` in log-price units with flow in BTC.
    pub fn planted_y_tilde(&self, day_index: i64) -> f64 {
        let (sigma_imp, _, y_coef) = self.day_params(day_index);
        sigma_imp * y_coef / self.base_daily_volume.powf(self.impact.delta)
    }
}

/// Named, order-independent random substream.
fn substream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    // splitmix64 finalizer over the combined seed
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    ChaCha8Rng::seed_from_u64(z)
}

/// One planted metaorder.
#[derive(Debug, Clone, Serialize)]
pub struct PlantedMetaOrder {
    pub id: u64,
    pub trader: TraderId,
    pub sign: i8,
    pub q_raw: i128,
    pub t_start: i64,
    pub t_end: i64,
    pub n_children: usize,
}

/// Planted per-day impact parameters.
#[derive(Debug, Clone, Serialize)]
pub struct PlantedDay {
    pub day_index: i64,
    pub sigma_impact: f64,
    pub sigma_noise: f64,
    pub y_coef: f64,
    /// Dimensional prefactor: response = y_tilde * |flow_btc|^delta.
    pub y_tilde: f64,
}

/// Ground truth accompanying a generated tape.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Per-trade planted metaorder id, aligned with the tape's trade order;
    /// None marks background trades.
    pub labels: Vec<Option<u64>>,
    pub metaorders: Vec<PlantedMetaOrder>,
    pub days: Vec<PlantedDay>,
}

impl GroundTruth {
    /// Rebuild ground truth from per-trade labels alone (metaorder records
    /// are reconstructed from the labeled trades; day parameters are not
    /// recoverable and stay empty).
    pub fn from_labels(tape: &Tape, labels: Vec<Option<u64>>) -> Self {
        let trades = tape.trades();
        let n_meta = labels.iter().flatten().max().map_or(0, |&m| m as usize + 1);
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_meta];
        for (i, label) in labels.iter().enumerate() {
            if let Some(id) = label {
                groups[*id as usize].push(i);
            }
        }
        let metaorders = groups
            .into_iter()
            .enumerate()
            .filter(|(_, g)| !g.is_empty())
            .map(|(id, g)| {
                let first = &trades[g[0]];
                let last = &trades[*g.last().unwrap()];
                PlantedMetaOrder {
                    id: id as u64,
                    trader: first.aggressor_id,
                    sign: first.side.sign() as i8,
                    q_raw: g.iter().map(|&i| trades[i].volume as i128).sum(),
                    t_start: first.timestamp,
                    t_end: last.timestamp,
                    n_children: g.len(),
                }
            })
            .collect();
        GroundTruth {
            labels,
            metaorders,
            days: Vec::new(),
        }
    }

    /// CSV export: `trade_id, metaorder_id` with an empty id for background
    /// trades, in tape order.
    pub fn write_csv<W: std::io::Write>(&self, tape: &Tape, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "trade_id,metaorder_id")?;
        for (t, label) in tape.trades().iter().zip(&self.labels) {
            match label {
                Some(id) => writeln!(out, "{},{}", t.trade_id, id)?,
                None => writeln!(out, "{},", t.trade_id)?,
            }
        }
        Ok(())
    }

    /// Read labels exported by [`GroundTruth::write_csv`] back against a
    /// tape, realigning by trade id.
    pub fn read_csv<R: std::io::Read>(tape: &Tape, source: R) -> Result<Self, ScenarioError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
        let mut by_trade: std::collections::HashMap<u64, Option<u64>> = std::collections::HashMap::new();
        for record in reader.records() {
            let record = record.map_err(|e| invalid("ground_truth", e.to_string()))?;
            let trade_id: u64 = record
                .get(0)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| invalid("ground_truth", "bad trade_id"))?;
            let label = match record.get(1).map(str::trim) {
                None | Some("") => None,
                Some(s) => Some(
                    s.parse::<u64>()
                        .map_err(|_| invalid("ground_truth", format!("bad metaorder_id {s:?}")))?,
                ),
            };
            by_trade.insert(trade_id, label);
        }
        let labels: Vec<Option<u64>> = tape
            .trades()
            .iter()
            .map(|t| by_trade.get(&t.trade_id).copied().flatten())
            .collect();
        Ok(GroundTruth::from_labels(tape, labels))
    }
}

struct Skeleton {
    trader: u32,
    t_start: i64,
    duration_ns: i64,
    child_offsets: Vec<i64>,
    child_volumes: Vec<i64>,
    q_raw: i128,
}

fn sample_child_count<R: Rng>(rng: &mut R, mix: &[f64; 4], bucket4: (u32, u32)) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut bucket = 3;
    for (i, p) in mix.iter().enumerate() {
        acc += p;
        if u < acc {
            bucket = i;
            break;
        }
    }
    match bucket {
        0 => 1,
        1 => rng.gen_range(2..=4),
        2 => rng.gen_range(5..=9),
        _ => rng.gen_range(bucket4.0..=bucket4.1) as usize,
    }
}

fn schedule_offsets<R: Rng>(
    rng: &mut R,
    schedule: ChildSchedule,
    n: usize,
    duration_ns: i64,
) -> Vec<i64> {
    if n == 1 {
        return vec![0];
    }
    let mut offsets: Vec<i64> = (0..n)
        .map(|j| {
            let frac = j as f64 / (n - 1) as f64;
            let u = match schedule {
                ChildSchedule::Linear { time_jitter } => {
                    if j == 0 || j == n - 1 {
                        frac
                    } else {
                        let spacing = 1.0 / (n - 1) as f64;
                        frac + time_jitter * spacing * (rng.gen::<f64>() - 0.5)
                    }
                }
                ChildSchedule::FrontLoaded { time_exponent } => frac.powf(time_exponent),
            };
            (u.clamp(0.0, 1.0) * duration_ns as f64).round() as i64
        })
        .collect();
    offsets[0] = 0;
    offsets[n - 1] = duration_ns;
    // Enforce strict increase inside the planted duration.
    for j in 1..n {
        if offsets[j] <= offsets[j - 1] {
            offsets[j] = offsets[j - 1] + 1;
        }
    }
    for j in (0..n - 1).rev() {
        if offsets[j] >= offsets[j + 1] {
            offsets[j] = offsets[j + 1] - 1;
        }
    }
    offsets
}

/// Exact split of `q_raw` into `n` near-equal positive parts.
fn split_volumes(q_raw: i64, n: usize) -> Vec<i64> {
    let mut out = Vec::with_capacity(n);
    let mut prev: i64 = 0;
    for j in 1..=n {
        let c = ((q_raw as i128 * j as i128) / n as i128) as i64;
        out.push(c - prev);
        prev = c;
    }
    out
}

/// Exponential-relaxation pools keyed by quantized time constants, plus the
/// permanent targets of closed episodes. `J(t)` is evaluated exactly.
struct FlowState {
    /// Sum of permanent targets of closed episodes, BTC.
    base_targets: f64,
    /// Signed flow of currently executing metaorders, BTC.
    exec_sum: f64,
    /// (quantized tau bucket, decaying amplitude, reference time).
    pools: Vec<(i32, f64, i64)>,
}

const TAU_BUCKETS_PER_OCTAVE: f64 = 4.0;

fn tau_bucket(tau_secs: f64) -> i32 {
    (tau_secs.max(1e-3).log2() * TAU_BUCKETS_PER_OCTAVE).round() as i32
}

fn bucket_tau_ns(bucket: i32) -> f64 {
    2f64.powf(bucket as f64 / TAU_BUCKETS_PER_OCTAVE) * NS_PER_SEC as f64
}

impl FlowState {
    fn new() -> Self {
        FlowState {
            base_targets: 0.0,
            exec_sum: 0.0,
            pools: Vec::new(),
        }
    }

    /// Advance every pool to time `t` and return the aggregate flow J(t).
    fn advance(&mut self, t: i64) -> f64 {
        let mut j = self.base_targets + self.exec_sum;
        self.pools.retain_mut(|(bucket, d, t_ref)| {
            let tau = bucket_tau_ns(*bucket);
            *d *= (-((t - *t_ref) as f64) / tau).exp();
            *t_ref = t;
            j += *d;
            d.abs() > 1e-12
        });
        j
    }

    /// Close an episode: its target is retained permanently and the excess
    /// decays with time constant `tau`.
    fn close_episode(&mut self, flow: f64, target: f64, tau_secs: f64, t: i64) {
        self.base_targets += target;
        let bucket = tau_bucket(tau_secs);
        let excess = flow - target;
        if excess == 0.0 {
            return;
        }
        match self.pools.iter_mut().find(|(b, _, _)| *b == bucket) {
            // Pools advanced to t earlier in this event.
            Some((_, d, t_ref)) => {
                debug_assert_eq!(*t_ref, t);
                *d += excess;
            }
            None => self.pools.push((bucket, excess, t)),
        }
        self.pools.sort_by_key(|(b, _, _)| *b);
    }
}

fn signed_pow(x: f64, delta: f64) -> f64 {
    x.signum() * x.abs().powf(delta)
}

enum FillKind {
    /// (skeleton index, child index)
    Child(usize, usize),
    /// background sequence number
    Background(usize),
}

struct Fill {
    t: i64,
    kind: FillKind,
    volume_raw: i64,
    sign: i8,
}

/// Generate a tape and its ground truth. Deterministic: the same scenario
/// (including seed) yields byte-identical output.
pub fn generate(scenario: &SyntheticScenario) -> Result<(Tape, GroundTruth), ScenarioError> {
    scenario.validate()?;
    let law = &scenario.impact;

    // Planted metaorder skeletons, per trader.
    let mut skeletons: Vec<Skeleton> = Vec::new();
    for trader in 0..scenario.n_traders {
        let mut rng = substream(scenario.seed, &format!("trader/{trader}"));
        let size_dist = LogNormal::new(scenario.size_lognormal.0, scenario.size_lognormal.1)
            .map_err(|e| invalid("size_lognormal", e.to_string()))?;
        let dur_dist = LogNormal::new(scenario.duration_lognormal.0, scenario.duration_lognormal.1)
            .map_err(|e| invalid("duration_lognormal", e.to_string()))?;
        let mut cursor = scenario.t0_ns
            + (rng.gen::<f64>() * scenario.mean_extra_gap_secs.max(1.0) * NS_PER_SEC as f64)
                as i64;
        for _ in 0..scenario.metaorders_per_trader {
            let extra = -scenario.mean_extra_gap_secs * rng.gen::<f64>().max(1e-12).ln();
            cursor += ((scenario.min_gap_secs + extra) * NS_PER_SEC as f64).round() as i64;
            let n_children = sample_child_count(
                &mut rng,
                &scenario.child_count_mix,
                (scenario.bucket4_min_children, scenario.max_children),
            );
            let q_btc: f64 = size_dist.sample(&mut rng);
            let q_raw = ((q_btc * 1e8).round() as i64).max(n_children as i64);
            let duration_ns = if n_children == 1 {
                0
            } else {
                let secs: f64 = dur_dist.sample(&mut rng);
                ((secs * NS_PER_SEC as f64).round() as i64).max(n_children as i64 * 1_000_000)
            };
            let child_offsets = schedule_offsets(&mut rng, scenario.schedule, n_children, duration_ns);
            let child_volumes = split_volumes(q_raw, n_children);
            skeletons.push(Skeleton {
                trader,
                t_start: cursor,
                duration_ns,
                child_offsets,
                child_volumes,
                q_raw: q_raw as i128,
            });
            cursor += duration_ns;
        }
    }

    // Global start-time order defines planted ids and the sign sequence.
    skeletons.sort_by_key(|s| (s.t_start, s.trader));
    let n_meta = skeletons.len();
    let mut sign_rng = substream(scenario.seed, "signs");
    let signs: Vec<i8> = match scenario.signs {
        SignMode::Independent => (0..n_meta)
            .map(|_| if sign_rng.gen_bool(0.5) { 1 } else { -1 })
            .collect(),
        SignMode::LongMemory { gamma } => long_memory_signs(&mut sign_rng, n_meta, gamma),
    };

    // Background trades over the padded horizon.
    let mut fills: Vec<Fill> = Vec::new();
    let last_meta_end = skeletons
        .iter()
        .map(|s| s.t_start + s.duration_ns)
        .max()
        .unwrap_or(scenario.t0_ns);
    let pad = (scenario.background_pad_secs * NS_PER_SEC as f64).round() as i64;
    if scenario.background_trades_per_day > 0.0 {
        let mut rng = substream(scenario.seed, "background");
        let vol_dist = LogNormal::new(
            scenario.background_volume_lognormal.0,
            scenario.background_volume_lognormal.1,
        )
        .map_err(|e| invalid("background_volume_lognormal", e.to_string()))?;
        let mean_gap_ns = NS_PER_DAY as f64 / scenario.background_trades_per_day;
        let mut t = scenario.t0_ns - pad;
        let horizon_end = last_meta_end + pad;
        let mut seq = 0usize;
        loop {
            t += (-mean_gap_ns * rng.gen::<f64>().max(1e-12).ln()).round() as i64;
            if t > horizon_end {
                break;
            }
            let v_btc: f64 = vol_dist.sample(&mut rng);
            let volume_raw = ((v_btc * 1e8).round() as i64).max(1);
            let sign = if rng.gen_bool(0.5) { 1 } else { -1 };
            fills.push(Fill {
                t,
                kind: FillKind::Background(seq),
                volume_raw,
                sign,
            });
            seq += 1;
            if scenario.background_balanced {
                fills.push(Fill {
                    t: t + 1,
                    kind: FillKind::Background(seq),
                    volume_raw,
                    sign: -sign,
                });
                seq += 1;
            }
        }
    }
    for (mi, s) in skeletons.iter().enumerate() {
        for (ci, (&off, &vol)) in s.child_offsets.iter().zip(&s.child_volumes).enumerate() {
            fills.push(Fill {
                t: s.t_start + off,
                kind: FillKind::Child(mi, ci),
                volume_raw: vol,
                sign: signs[mi],
            });
        }
    }
    fills.sort_by_key(|f| {
        (
            f.t,
            match f.kind {
                FillKind::Child(mi, ci) => (0u8, mi, ci),
                FillKind::Background(seq) => (1u8, seq, 0),
            },
        )
    });

    // Latent price walk: pre-trade prints, post-trade flow.
    let mut noise_rng = substream(scenario.seed, "noise");
    let mut flow = FlowState::new();
    let mut exec_flow: Vec<f64> = vec![0.0; n_meta];
    let mut noise_state = 0.0f64;
    let ln_p0 = scenario.initial_price.ln();
    let mut last_t = fills.first().map_or(scenario.t0_ns, |f| f.t);
    let mut current_day = i64::MIN;
    let mut day_sigma_imp = 0.0;
    let mut day_sigma_noise = 0.0;
    let mut day_ycoef = 0.0;
    let pi_flow_scale = if law.pi_permanent == 0.0 {
        0.0
    } else {
        law.pi_permanent.powf(1.0 / law.delta)
    };

    let mut rows: Vec<Trade> = Vec::with_capacity(fills.len());
    let mut labels: Vec<Option<u64>> = Vec::with_capacity(fills.len());
    for (idx, fill) in fills.iter().enumerate() {
        let day = fill.t.div_euclid(NS_PER_DAY);
        if day != current_day {
            current_day = day;
            let (si, sn, yc) = scenario.day_params(day);
            day_sigma_imp = si;
            day_sigma_noise = sn;
            day_ycoef = yc;
        }
        let dt_days = (fill.t - last_t) as f64 / NS_PER_DAY as f64;
        if dt_days > 0.0 && day_sigma_noise > 0.0 {
            let z: f64 = noise_rng.sample(StandardNormal);
            noise_state += z * day_sigma_noise * dt_days.sqrt();
        } else if dt_days > 0.0 {
            // Keep the noise stream aligned across sigma choices.
            let _: f64 = noise_rng.sample(StandardNormal);
        }
        last_t = fill.t;

        // A metaorder's first fill prints at the standing price and gauges
        // the path; its own flow lands after the print. Later fills sweep
        // deeper and print at the state including their own flow, so the
        // last fill of an undisturbed metaorder prints the full response.
        let w = fill.sign as f64 * fill.volume_raw as f64 * 1e-8;
        let opening = match fill.kind {
            FillKind::Child(_, ci) => ci == 0,
            FillKind::Background(_) => true,
        };
        let mut j = flow.advance(fill.t);
        if !opening {
            if let FillKind::Child(mi, _) = fill.kind {
                exec_flow[mi] += w;
                flow.exec_sum += w;
                j += w;
            }
        }
        let response =
            day_sigma_imp * day_ycoef * signed_pow(j / scenario.base_daily_volume, law.delta);
        let price_usd = (ln_p0 + response + noise_state).exp();
        let price_raw = ((price_usd * 1e5).round() as i64).max(1);
        let (best_bid, best_ask) = match scenario.spread_frac {
            None => (None, None),
            Some(s) => {
                if fill.sign > 0 {
                    let bid = ((price_usd * (1.0 - s) * 1e5).round() as i64).max(1);
                    (Some(bid.min(price_raw - 1).max(1)), Some(price_raw))
                } else {
                    let ask = ((price_usd * (1.0 + s) * 1e5).round() as i64).max(price_raw + 1);
                    (Some(price_raw), Some(ask))
                }
            }
        };

        let (trader, label) = match fill.kind {
            FillKind::Child(mi, _) => (TraderId(skeletons[mi].trader), Some(mi as u64)),
            FillKind::Background(seq) => (TraderId(scenario.n_traders + seq as u32), None),
        };
        rows.push(Trade {
            timestamp: fill.t,
            trade_id: idx as u64 + 1,
            aggressor_id: trader,
            passive_id: None,
            side: if fill.sign > 0 { Side::Buy } else { Side::Sell },
            price: price_raw,
            volume: fill.volume_raw,
            best_bid,
            best_ask,
        });
        labels.push(label);

        // Opening fills contribute their flow after the print; later child
        // fills already did so above. Episodes close on their last fill.
        match fill.kind {
            FillKind::Child(mi, ci) => {
                if opening {
                    exec_flow[mi] += w;
                    flow.exec_sum += w;
                }
                let s = &skeletons[mi];
                if ci + 1 == s.child_offsets.len() {
                    let a_end = exec_flow[mi];
                    flow.exec_sum -= a_end;
                    let target = pi_flow_scale * a_end;
                    // Impact ~ flow^delta, so an impact horizon of
                    // decay_horizon_mult * T needs the flow to relax delta
                    // times faster.
                    let impact_horizon = if s.duration_ns > 0 {
                        law.decay_horizon_mult * s.duration_ns as f64 / NS_PER_SEC as f64
                    } else {
                        scenario.background_decay_secs
                    };
                    flow.close_episode(a_end, target, impact_horizon * law.delta, fill.t);
                }
            }
            FillKind::Background(_) => {
                let target = pi_flow_scale * w;
                flow.close_episode(
                    w,
                    target,
                    scenario.background_decay_secs * law.delta,
                    fill.t,
                );
            }
        }
    }

    let meta = TapeMeta {
        instrument: "SYNTH-BTCUSD".to_string(),
        ..TapeMeta::default()
    };
    let ParsedTape { tape, report } = Tape::from_rows(meta, rows, &[])
        .expect("generated trade ids are unique by construction");
    debug_assert_eq!(report.reorder_warnings, 0);

    let planted: Vec<PlantedMetaOrder> = skeletons
        .iter()
        .enumerate()
        .map(|(mi, s)| PlantedMetaOrder {
            id: mi as u64,
            trader: TraderId(s.trader),
            sign: signs[mi],
            q_raw: s.q_raw,
            t_start: s.t_start,
            t_end: s.t_start + s.duration_ns,
            n_children: s.child_offsets.len(),
        })
        .collect();
    let days: Vec<PlantedDay> = match tape.time_range() {
        None => Vec::new(),
        Some((a, b)) => (a.div_euclid(NS_PER_DAY)..=b.div_euclid(NS_PER_DAY))
            .map(|day_index| {
                let (sigma_impact, sigma_noise, y_coef) = scenario.day_params(day_index);
                PlantedDay {
                    day_index,
                    sigma_impact,
                    sigma_noise,
                    y_coef,
                    y_tilde: scenario.planted_y_tilde(day_index),
                }
            })
            .collect(),
    };

    Ok((
        tape,
        GroundTruth {
            labels,
            metaorders: planted,
            days,
        },
    ))
}

//! Fixed-budget map messages: codecs, recipient selection and the per-round
//! exchange with its bandwidth ledger.

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::category::{CategoryId, K_TOTAL};
use crate::error::{Error, Result};
use crate::geometry::{direction, Cell, Dims, CELL_SIZE};
use crate::perception::{Pose, SensorParams};
use crate::semantic_map::{SemanticMap, CHANNELS, EXPLORED, OCCUPIED};

/// Presence bit for the occupied channel in a [`Presence`] cell mask.
pub const OCC_BIT: u32 = 1 << OCCUPIED;
/// Presence bit for the explored channel.
pub const EXP_BIT: u32 = 1 << EXPLORED;
const CAT_BITS: u32 = (1 << K_TOTAL) - 1;

/// Dilation of the view sector that defines the communication area, meters.
pub const COMM_MARGIN_M: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    MapVector,
    FoundNotice,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub sender: usize,
    pub kind: MessageKind,
    pub payload: Vec<u32>,
}

impl Message {
    pub fn size(&self) -> usize {
        self.payload.len()
    }

    pub fn found_notice(sender: usize, category: CategoryId, round: u32) -> Message {
        Message {
            sender,
            kind: MessageKind::FoundNotice,
            payload: vec![category.0 as u32, round],
        }
    }

    /// Category carried by a found notice.
    pub fn found_category(&self) -> Option<CategoryId> {
        match self.kind {
            MessageKind::FoundNotice => self
                .payload
                .first()
                .filter(|&&k| (k as usize) < K_TOTAL)
                .map(|&k| CategoryId(k as u8)),
            MessageKind::MapVector => None,
        }
    }
}

/// Boolean presence of every channel, one bitmask per cell (bit = channel).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Presence {
    dims: Dims,
    cells: Vec<u32>,
}

impl Presence {
    pub fn empty(dims: Dims) -> Presence {
        Presence {
            dims,
            cells: vec![0; dims.area()],
        }
    }

    pub fn from_map(map: &SemanticMap) -> Presence {
        let dims = map.dims();
        let cells = map
            .raw_counts()
            .chunks_exact(CHANNELS)
            .map(|counts| {
                counts
                    .iter()
                    .enumerate()
                    .fold(0u32, |m, (ch, &v)| if v > 0 { m | (1 << ch) } else { m })
            })
            .collect();
        Presence { dims, cells }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn mask(&self, c: Cell) -> u32 {
        self.cells[self.dims.index(c)]
    }

    pub fn masks(&self) -> &[u32] {
        &self.cells
    }

    pub fn to_map(&self) -> SemanticMap {
        let mut map = SemanticMap::new(self.dims);
        for (i, &m) in self.cells.iter().enumerate() {
            let c = self.dims.cell(i);
            for ch in 0..CHANNELS {
                if m & (1 << ch) != 0 {
                    map.add(c, ch, 1);
                }
            }
        }
        map
    }
}

/// Coarse grid used by the codecs: `block`-sized squares, edge blocks clipped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Coarse {
    dims: Dims,
    block: usize,
    cw: usize,
    ch: usize,
}

impl Coarse {
    fn new(dims: Dims, block: usize) -> Coarse {
        Coarse {
            dims,
            block,
            cw: dims.l.div_ceil(block),
            ch: dims.w.div_ceil(block),
        }
    }

    fn count(&self) -> usize {
        self.cw * self.ch
    }

    fn of(&self, c: Cell) -> usize {
        (c.y as usize / self.block) * self.cw + c.x as usize / self.block
    }

    fn cells_of(&self, j: usize) -> impl Iterator<Item = Cell> {
        let (bx, by) = (j % self.cw, j / self.cw);
        let x0 = bx * self.block;
        let y0 = by * self.block;
        let x1 = (x0 + self.block).min(self.dims.l);
        let y1 = (y0 + self.block).min(self.dims.w);
        (y0..y1).flat_map(move |y| (x0..x1).map(move |x| Cell::new(x as i32, y as i32)))
    }
}

/// Affine encoder/decoder pair over block-pooled boolean presence.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnedCodec {
    pub pool: usize,
    pub enc_w: Array2<f32>,
    pub enc_b: Array1<f32>,
    pub dec_w: Array2<f32>,
    pub dec_b: Array1<f32>,
}

impl LearnedCodec {
    pub fn input_dim(&self) -> usize {
        self.dec_b.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodecVariant {
    Quantized,
    Learned,
}

#[derive(Clone, Debug, PartialEq)]
enum CodecImpl {
    Quantized,
    Learned(LearnedCodec),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Codec {
    dims: Dims,
    budget: usize,
    coarse: Coarse,
    inner: CodecImpl,
}

/// Bits per coarse cell in the quantized payload: 5 for category, 1 occupied, 1 explored.
const QBITS: usize = 7;
const QPER_WORD: usize = 4;

impl Codec {
    /// Quantized codec with the finest block size whose packed form fits `budget`.
    pub fn quantized(dims: Dims, budget: usize) -> Result<Codec> {
        if budget == 0 {
            return Err(Error::validation("comms.budget", "must be positive"));
        }
        let cap = budget * QPER_WORD;
        let block = (1..=dims.l.max(dims.w).max(1))
            .find(|&b| Coarse::new(dims, b).count() <= cap)
            .unwrap_or(dims.l.max(dims.w).max(1));
        Codec::quantized_with_block(dims, budget, block)
    }

    pub fn quantized_with_block(dims: Dims, budget: usize, block: usize) -> Result<Codec> {
        if block == 0 {
            return Err(Error::validation("comms.block", "must be positive"));
        }
        let coarse = Coarse::new(dims, block);
        if coarse.count() > budget * QPER_WORD {
            return Err(Error::validation(
                "comms.budget",
                format!("{} coarse cells do not fit {} values", coarse.count(), budget),
            ));
        }
        Ok(Codec {
            dims,
            budget,
            coarse,
            inner: CodecImpl::Quantized,
        })
    }

    /// Learned codec with small random coefficients.
    pub fn learned(dims: Dims, budget: usize, pool: usize, seed: u64) -> Result<Codec> {
        if budget == 0 || pool == 0 {
            return Err(Error::validation("comms", "budget and pool must be positive"));
        }
        let coarse = Coarse::new(dims, pool);
        let d = coarse.count() * CHANNELS;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc = Normal::new(0.0f32, (1.0 / d as f32).sqrt()).expect("valid normal");
        let dec = Normal::new(0.0f32, (1.0 / budget as f32).sqrt() * 0.1).expect("valid normal");
        let enc_w = Array2::from_shape_fn((budget, d), |_| enc.sample(&mut rng));
        let dec_w = Array2::from_shape_fn((d, budget), |_| dec.sample(&mut rng));
        Ok(Codec {
            dims,
            budget,
            coarse,
            inner: CodecImpl::Learned(LearnedCodec {
                pool,
                enc_w,
                enc_b: Array1::zeros(budget),
                dec_w,
                dec_b: Array1::zeros(d),
            }),
        })
    }

    pub fn from_learned(dims: Dims, params: LearnedCodec) -> Result<Codec> {
        let coarse = Coarse::new(dims, params.pool);
        let d = coarse.count() * CHANNELS;
        let v = params.enc_b.len();
        if params.enc_w.dim() != (v, d) || params.dec_w.dim() != (d, v) || params.dec_b.len() != d {
            return Err(Error::DimsMismatch("learned codec shapes".into()));
        }
        Ok(Codec {
            dims,
            budget: v,
            coarse,
            inner: CodecImpl::Learned(params),
        })
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Coarse block side in cells (pooling factor for the learned variant).
    pub fn block(&self) -> usize {
        self.coarse.block
    }

    pub fn variant(&self) -> CodecVariant {
        match self.inner {
            CodecImpl::Quantized => CodecVariant::Quantized,
            CodecImpl::Learned(_) => CodecVariant::Learned,
        }
    }

    pub fn learned_params(&self) -> Option<&LearnedCodec> {
        match &self.inner {
            CodecImpl::Learned(p) => Some(p),
            CodecImpl::Quantized => None,
        }
    }

    fn check_dims(&self, dims: Dims) -> Result<()> {
        if dims != self.dims {
            return Err(Error::DimsMismatch(format!(
                "codec is {}x{}, map is {}x{}",
                self.dims.l, self.dims.w, dims.l, dims.w
            )));
        }
        Ok(())
    }

    pub fn encode(&self, map: &SemanticMap) -> Result<Vec<u32>> {
        self.check_dims(map.dims())?;
        match &self.inner {
            CodecImpl::Quantized => Ok(self.encode_quantized(map)),
            CodecImpl::Learned(p) => {
                let x = pooled_presence(&self.coarse, &Presence::from_map(map));
                let z = p.enc_w.dot(&x) + &p.enc_b;
                Ok(z.iter().map(|v| v.to_bits()).collect())
            }
        }
    }

    fn encode_quantized(&self, map: &SemanticMap) -> Vec<u32> {
        let mut out = vec![0u32; self.budget];
        for j in 0..self.coarse.count() {
            let mut maxes = [0u16; CHANNELS];
            for c in self.coarse.cells_of(j) {
                for (m, &v) in maxes.iter_mut().zip(map.cell_counts(c)) {
                    *m = (*m).max(v);
                }
            }
            let mut best: Option<usize> = None;
            for k in 0..K_TOTAL {
                if maxes[k] > 0 && best.is_none_or(|b| maxes[k] > maxes[b]) {
                    best = Some(k);
                }
            }
            let mut v = best.map_or(0, |k| k as u32 + 1);
            if maxes[OCCUPIED] > 0 {
                v |= 1 << 5;
            }
            if maxes[EXPLORED] > 0 {
                v |= 1 << 6;
            }
            out[j / QPER_WORD] |= v << (QBITS * (j % QPER_WORD));
        }
        out
    }

    /// Boolean presence reconstructed from a payload, at full resolution.
    pub fn decode_presence(&self, payload: &[u32]) -> Result<Presence> {
        if payload.len() != self.budget {
            return Err(Error::BadLength {
                expected: self.budget,
                got: payload.len(),
            });
        }
        let mut pres = Presence::empty(self.dims);
        let n = self.coarse.count();
        let block_masks: Vec<u32> = match &self.inner {
            CodecImpl::Quantized => (0..n)
                .map(|j| {
                    let v = (payload[j / QPER_WORD] >> (QBITS * (j % QPER_WORD))) & 0x7f;
                    let mut m = 0;
                    let cat = v & 0x1f;
                    if cat > 0 && (cat as usize) <= K_TOTAL {
                        m |= 1 << (cat - 1);
                    }
                    if v & (1 << 5) != 0 {
                        m |= OCC_BIT;
                    }
                    if v & (1 << 6) != 0 {
                        m |= EXP_BIT;
                    }
                    m
                })
                .collect(),
            CodecImpl::Learned(p) => {
                let z = Array1::from_iter(payload.iter().map(|&b| f32::from_bits(b)));
                let y = p.dec_w.dot(&z) + &p.dec_b;
                (0..n)
                    .map(|j| {
                        (0..CHANNELS).fold(0u32, |m, ch| {
                            if y[j * CHANNELS + ch] >= 0.5 {
                                m | (1 << ch)
                            } else {
                                m
                            }
                        })
                    })
                    .collect()
            }
        };
        for (j, &m) in block_masks.iter().enumerate() {
            let m = if m & (CAT_BITS | OCC_BIT) != 0 { m | EXP_BIT } else { m };
            if m == 0 {
                continue;
            }
            for c in self.coarse.cells_of(j) {
                let i = self.dims.index(c);
                pres.cells[i] = m;
            }
        }
        Ok(pres)
    }

    /// Decoded map with counts in {0, 1}.
    pub fn decode(&self, payload: &[u32]) -> Result<SemanticMap> {
        Ok(self.decode_presence(payload)?.to_map())
    }
}

pub fn encode_map(codec: &Codec, map: &SemanticMap) -> Result<Vec<u32>> {
    codec.encode(map)
}

pub fn decode_map(codec: &Codec, payload: &[u32]) -> Result<SemanticMap> {
    codec.decode(payload)
}

/// Block-max pooled presence, flattened block-major, channel-minor.
fn pooled_presence(coarse: &Coarse, pres: &Presence) -> Array1<f32> {
    let mut x = Array1::zeros(coarse.count() * CHANNELS);
    for (i, &m) in pres.cells.iter().enumerate() {
        if m == 0 {
            continue;
        }
        let j = coarse.of(pres.dims.cell(i));
        for ch in 0..CHANNELS {
            if m & (1 << ch) != 0 {
                x[j * CHANNELS + ch] = 1.0;
            }
        }
    }
    x
}

/// Mean squared presence reconstruction error over the training set.
#[derive(Clone, Debug, PartialEq)]
pub struct CodecTraining {
    pub codec: Codec,
    /// Loss at initialization followed by the loss after each epoch.
    pub loss_trace: Vec<f64>,
}

pub const MIN_CODEC_SAMPLES: usize = 32;

/// Full-batch gradient descent on the reconstruction loss of the pooled
/// presence targets.
pub fn train_learned_codec(
    init: &Codec,
    maps: &[SemanticMap],
    epochs: usize,
    learning_rate: f64,
) -> Result<CodecTraining> {
    let CodecImpl::Learned(params) = &init.inner else {
        return Err(Error::validation("comms.codec", "training needs the learned variant"));
    };
    if maps.len() < MIN_CODEC_SAMPLES {
        return Err(Error::TooFewSamples {
            need: MIN_CODEC_SAMPLES,
            got: maps.len(),
        });
    }
    for m in maps {
        init.check_dims(m.dims())?;
    }
    let n = maps.len();
    let d = params.input_dim();
    let mut x = Array2::<f32>::zeros((n, d));
    for (r, m) in maps.iter().enumerate() {
        x.row_mut(r)
            .assign(&pooled_presence(&init.coarse, &Presence::from_map(m)));
    }
    let mut p = params.clone();
    let scale = 2.0 / (n * d) as f32;
    let lr = learning_rate as f32;
    let loss_of = |p: &LearnedCodec| -> (f64, Array2<f32>, Array2<f32>) {
        let z = x.dot(&p.enc_w.t()) + &p.enc_b;
        let y = z.dot(&p.dec_w.t()) + &p.dec_b;
        let e = y - &x;
        let loss = e.iter().map(|v| (*v as f64) * (*v as f64)).sum::<f64>() / (n * d) as f64;
        (loss, z, e)
    };
    let (mut loss, mut z, mut e) = loss_of(&p);
    let mut trace = vec![loss];
    for epoch in 0..epochs {
        let dy = e * scale;
        let g_dec_w = dy.t().dot(&z);
        let g_dec_b = dy.sum_axis(Axis(0));
        let dz = dy.dot(&p.dec_w);
        let g_enc_w = dz.t().dot(&x);
        let g_enc_b = dz.sum_axis(Axis(0));
        p.dec_w.scaled_add(-lr, &g_dec_w);
        p.dec_b.scaled_add(-lr, &g_dec_b);
        p.enc_w.scaled_add(-lr, &g_enc_w);
        p.enc_b.scaled_add(-lr, &g_enc_b);
        (loss, z, e) = loss_of(&p);
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("codec loss non-finite at epoch {epoch}")));
        }
        trace.push(loss);
    }
    Ok(CodecTraining {
        codec: Codec {
            inner: CodecImpl::Learned(p),
            ..init.clone()
        },
        loss_trace: trace,
    })
}

/// Agent position in meters (cell center).
fn center_m(c: Cell) -> (f64, f64) {
    ((c.x as f64 + 0.5) * CELL_SIZE, (c.y as f64 + 0.5) * CELL_SIZE)
}

/// Euclidean distance from `point` to the filled circular sector with the
/// given apex, axis heading, half-angle and radius. Zero inside.
pub fn sector_distance(
    apex: (f64, f64),
    heading_deg: f64,
    half_angle_deg: f64,
    radius: f64,
    point: (f64, f64),
) -> f64 {
    let v = (point.0 - apex.0, point.1 - apex.1);
    let r = v.0.hypot(v.1);
    if r == 0.0 {
        return 0.0;
    }
    let (hx, hy) = direction(heading_deg);
    let cos_phi = ((v.0 * hx + v.1 * hy) / r).clamp(-1.0, 1.0);
    let phi = cos_phi.acos().to_degrees();
    if phi <= half_angle_deg {
        return (r - radius).max(0.0);
    }
    let seg = |deg: f64| {
        let (ux, uy) = direction(heading_deg + deg);
        let t = (v.0 * ux + v.1 * uy).clamp(0.0, radius);
        (v.0 - t * ux).hypot(v.1 - t * uy)
    };
    seg(half_angle_deg).min(seg(-half_angle_deg))
}

/// Agents whose cell center lies within the sender's view sector dilated by 1.0 m.
pub fn select_recipients(sender: usize, poses: &[Pose], sensor: &SensorParams) -> Vec<usize> {
    let Some(me) = poses.get(sender) else {
        return Vec::new();
    };
    let apex = center_m(me.cell);
    poses
        .iter()
        .enumerate()
        .filter(|&(i, p)| {
            i != sender
                && sector_distance(
                    apex,
                    me.heading.degrees() as f64,
                    sensor.fov_deg / 2.0,
                    sensor.max_range_m,
                    center_m(p.cell),
                ) <= COMM_MARGIN_M + 1e-9
        })
        .map(|(i, _)| i)
        .collect()
}

/// Per-episode bandwidth accounting, in transmitted values.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    pub agents: usize,
    /// Values sent from `i` to `j` at index `i * agents + j`.
    pub per_pair: Vec<u64>,
    pub total_values: u64,
    pub map_msgs: u64,
    pub found_msgs: u64,
    pub dropped_msgs: u64,
}

impl Ledger {
    pub fn new(agents: usize) -> Ledger {
        Ledger {
            agents,
            per_pair: vec![0; agents * agents],
            ..Default::default()
        }
    }

    fn record(&mut self, from: usize, to: usize, size: usize) {
        self.per_pair[from * self.agents + to] += size as u64;
        self.total_values += size as u64;
    }
}

/// One agent's contribution to a round.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Outbox {
    pub map_vector: Option<Vec<u32>>,
    pub found: Vec<(CategoryId, u32)>,
}

/// Delivers one round. Map vectors go to the sender's recipients among the
/// active agents and cost their size per recipient; when that would exceed
/// `cap` the message is dropped, senders taking priority by id. Found
/// notices go to every other active agent and are never dropped.
pub fn exchange(
    outboxes: &[Outbox],
    poses: &[Pose],
    active: &[bool],
    sensor: &SensorParams,
    cap: Option<u64>,
    ledger: &mut Ledger,
) -> Vec<Vec<Message>> {
    let n = outboxes.len();
    let mut inboxes = vec![Vec::new(); n];
    let mut map_values = 0u64;
    for (sender, out) in outboxes.iter().enumerate() {
        if let Some(payload) = &out.map_vector {
            let to: Vec<usize> = select_recipients(sender, poses, sensor)
                .into_iter()
                .filter(|&r| active[r])
                .collect();
            if to.is_empty() {
                continue;
            }
            let cost = (payload.len() * to.len()) as u64;
            if cap.is_some_and(|c| map_values + cost > c) {
                ledger.dropped_msgs += 1;
                continue;
            }
            map_values += cost;
            for r in to {
                ledger.record(sender, r, payload.len());
                ledger.map_msgs += 1;
                inboxes[r].push(Message {
                    sender,
                    kind: MessageKind::MapVector,
                    payload: payload.clone(),
                });
            }
        }
    }
    for (sender, out) in outboxes.iter().enumerate() {
        for &(cat, round) in &out.found {
            for r in (0..n).filter(|&r| r != sender && active[r]) {
                let msg = Message::found_notice(sender, cat, round);
                ledger.record(sender, r, msg.size());
                ledger.found_msgs += 1;
                inboxes[r].push(msg);
            }
        }
    }
    inboxes
}

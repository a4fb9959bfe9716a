//! Bit-exact emulation of packed DSP48 operations.
//!
//! Three packing schemes are modeled on the UltraScale 27x18 multiplier with
//! a 48-bit accumulator:
//!
//! * SIMD add/sub: the 48-bit ALU split into four 12-bit or two 24-bit lanes
//!   with the carry chain broken at lane boundaries.
//! * Factor-2 multiply-add: two products sharing a factor `c` computed as
//!   `(a << 18 + b) * c`, cascaded over `N` DSPs. The upper 30 bits hold
//!   `sum(a*c)` and the lower 18 bits `sum(b*c)`.
//! * Factor-4 multiply: four unsigned 4-bit factors times one common 4-bit
//!   factor. Three factors and the top three bits of the fourth go into the
//!   27-bit port spaced 8 bits apart; the fourth product is completed outside
//!   the DSP with `lsb(a3) * b`.

use thiserror::Error;

use crate::ir::{Signedness, Width};

pub const ACC_BITS: u32 = 48;
/// Width of the low product field of the factor-2 scheme.
pub const LOW_FIELD_BITS: u32 = 18;
const ACC_MASK: u64 = (1 << ACC_BITS) - 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DspError {
    #[error("lane {lane} input {value} does not fit a {width}-bit lane")]
    LaneOverflowInput { lane: usize, value: i64, width: u32 },
    #[error("expected {expected} lanes, got {got}")]
    LaneCount { expected: usize, got: usize },
    #[error("chain of {len} exceeds the overflow-free bound {max}")]
    ChainTooLong { len: usize, max: u64 },
    #[error("empty multiply-add chain")]
    EmptyChain,
    #[error("operand {value} does not fit {bits} bits")]
    OperandOverflow { value: i64, bits: u32 },
}

fn sign_extend(v: u64, bits: u32) -> i64 {
    let shift = 64 - bits;
    ((v << shift) as i64) >> shift
}

fn fits(v: i64, bits: u32, sign: Signedness) -> bool {
    let v = v as i128;
    match sign {
        Signedness::Signed => (-(1i128 << (bits - 1))..(1i128 << (bits - 1))).contains(&v),
        Signedness::Unsigned => (0..(1i128 << bits)).contains(&v),
    }
}

/// `fits` under either interpretation: `-2^(bits-1) <= v < 2^bits`.
fn fits_either(v: i64, bits: u32) -> bool {
    let v = v as i128;
    (-(1i128 << (bits - 1))..(1i128 << bits)).contains(&v)
}

// ---------------------------------------------------------------------------
// SIMD add/sub
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SimdAddMode {
    Four12,
    Two24,
}

impl SimdAddMode {
    pub fn lanes(self) -> usize {
        match self {
            SimdAddMode::Four12 => 4,
            SimdAddMode::Two24 => 2,
        }
    }

    pub fn lane_width(self) -> u32 {
        match self {
            SimdAddMode::Four12 => 12,
            SimdAddMode::Two24 => 24,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AddOp {
    Add,
    Sub,
}

/// Lane-wise `x + y` or `x - y` on the 48-bit ALU. Inputs may be signed or
/// unsigned as long as they fit the lane; outputs wrap at the lane width and
/// are read back under `out`.
pub fn simd_add(
    mode: SimdAddMode,
    xs: &[i64],
    ys: &[i64],
    op: AddOp,
    out: Signedness,
) -> Result<Vec<i64>, DspError> {
    let lanes = mode.lanes();
    let w = mode.lane_width();
    for v in [xs, ys] {
        if v.len() != lanes {
            return Err(DspError::LaneCount { expected: lanes, got: v.len() });
        }
    }
    let lane_mask = (1u64 << w) - 1;
    let mut x = 0u64;
    let mut y = 0u64;
    for (i, (&a, &b)) in xs.iter().zip(ys).enumerate() {
        for v in [a, b] {
            if !fits_either(v, w) {
                return Err(DspError::LaneOverflowInput { lane: i, value: v, width: w });
            }
        }
        x |= (a as u64 & lane_mask) << (i as u32 * w);
        y |= (b as u64 & lane_mask) << (i as u32 * w);
    }
    // Top bit of every lane. Keeping it out of the carry-propagating add
    // breaks the carry chain between lanes.
    let high: u64 = (0..lanes).map(|i| 1u64 << (i as u32 * w + w - 1)).sum();
    let word = match op {
        AddOp::Add => ((x & !high) + (y & !high)) ^ ((x ^ y) & high),
        AddOp::Sub => ((x | high) - (y & !high)) ^ ((x ^ !y) & high),
    } & ACC_MASK;
    Ok((0..lanes)
        .map(|i| {
            let lane = (word >> (i as u32 * w)) & lane_mask;
            match out {
                Signedness::Signed => sign_extend(lane, w),
                Signedness::Unsigned => lane as i64,
            }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Factor-2 multiply-add chains
// ---------------------------------------------------------------------------

/// Longest cascade for which the low field cannot overflow into the high one.
///
/// `m` is the width of the `a_i`/`b_i` operands and `n` the width of the
/// shared `c_i`.
pub fn max_chain_len(m: u32, n: u32, signed_product: bool) -> u64 {
    assert!(m >= 1 && n >= 1, "operand widths must be positive");
    if signed_product {
        let num: u128 = (1 << (LOW_FIELD_BITS - 1)) - 1;
        let shift = (m - 1) + (n - 1);
        if shift >= 128 {
            return 0;
        }
        (num / (1u128 << shift)) as u64
    } else {
        let num: u128 = (1 << LOW_FIELD_BITS) - 1;
        let (ma, na) = (m.min(64), n.min(64));
        let den = ((1u128 << ma) - 1).checked_mul((1u128 << na) - 1);
        den.map_or(0, |d| (num / d) as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MadChainParams {
    /// Width of `a_i` and `b_i`.
    pub m: u32,
    /// Width of `c_i`.
    pub n: u32,
    /// Whether `b_i * c_i` can be negative.
    pub signed_product: bool,
    pub len: usize,
}

impl MadChainParams {
    /// Derives chain parameters from the (effective width, signedness) of
    /// each operand stream. The product is signed when either `b` or `c` is
    /// signed; in that case unsigned operands need one extra bit.
    pub fn for_operands(
        a: &[(Width, Signedness)],
        b: &[(Width, Signedness)],
        c: &[(Width, Signedness)],
    ) -> MadChainParams {
        let signed_product = b.iter().chain(c).any(|(_, s)| s.is_signed());
        let adjusted = |&(w, s): &(Width, Signedness)| {
            if signed_product && !s.is_signed() {
                w.bits() + 1
            } else {
                w.bits()
            }
        };
        MadChainParams {
            m: a.iter().chain(b).map(adjusted).max().unwrap_or(1),
            n: c.iter().map(adjusted).max().unwrap_or(1),
            signed_product,
            len: c.len(),
        }
    }

    pub fn max_len(&self) -> u64 {
        max_chain_len(self.m, self.n, self.signed_product)
    }

    fn check(&self) -> Result<(), DspError> {
        if self.len == 0 {
            return Err(DspError::EmptyChain);
        }
        let max = self.max_len();
        if self.len as u64 > max {
            return Err(DspError::ChainTooLong { len: self.len, max });
        }
        Ok(())
    }
}

/// The 48-bit accumulator image: high product field in bits `[47:18]`, low
/// field in bits `[17:0]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PackedWord(u64);

impl PackedWord {
    pub fn from_raw(raw: u64) -> PackedWord {
        PackedWord(raw & ACC_MASK)
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    pub fn high_field(self) -> u64 {
        self.0 >> LOW_FIELD_BITS
    }

    pub fn low_field(self) -> u64 {
        self.0 & ((1 << LOW_FIELD_BITS) - 1)
    }
}

/// Runs the cascade: stage `i` multiplies `(a_i << 18) + b_i` by `c_i` and
/// adds it to the incoming 48-bit partial sum.
pub fn mad_chain_pack(
    a: &[i64],
    b: &[i64],
    c: &[i64],
    params: &MadChainParams,
) -> Result<PackedWord, DspError> {
    params.check()?;
    for v in [a, b, c] {
        if v.len() != params.len {
            return Err(DspError::LaneCount { expected: params.len, got: v.len() });
        }
    }
    let sign = if params.signed_product { Signedness::Signed } else { Signedness::Unsigned };
    let mut acc: u64 = 0;
    for i in 0..params.len {
        if !fits_either(a[i], params.m) {
            return Err(DspError::OperandOverflow { value: a[i], bits: params.m });
        }
        if !fits(b[i], params.m, sign) {
            return Err(DspError::OperandOverflow { value: b[i], bits: params.m });
        }
        if !fits(c[i], params.n, sign) {
            return Err(DspError::OperandOverflow { value: c[i], bits: params.n });
        }
        let port = ((a[i] as i128) << LOW_FIELD_BITS) + b[i] as i128;
        let stage = (port * c[i] as i128) as u64;
        acc = acc.wrapping_add(stage) & ACC_MASK;
    }
    Ok(PackedWord(acc))
}

/// Splits an accumulator image back into `(sum(a*c), sum(b*c))`.
///
/// When the low product is signed, its field is sign-interpreted and the
/// borrow it caused in the high field is undone before shifting.
pub fn mad_chain_extract(w: PackedWord, params: &MadChainParams) -> (i64, i64) {
    let low = w.low_field();
    let p_b = if params.signed_product {
        sign_extend(low, LOW_FIELD_BITS)
    } else {
        low as i64
    };
    let whole = sign_extend(w.raw(), ACC_BITS);
    let p_a = (whole - p_b) >> LOW_FIELD_BITS;
    (p_a, p_b)
}

// ---------------------------------------------------------------------------
// Factor-4 4-bit multiplications
// ---------------------------------------------------------------------------

/// Output field spacing: 4 bits of operand plus 4 bits of zero padding.
const QUAD_FIELD: u32 = 8;

/// Operand ports of the factor-4 scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quad4Layout {
    /// `a0 | a1 << 8 | a2 << 16 | (a3 >> 1) << 24`.
    pub port27: u32,
    pub port_b: i64,
}

impl Quad4Layout {
    pub fn new(a: [i64; 4], b: i64, b_signed: bool) -> Result<Quad4Layout, DspError> {
        for &v in &a {
            if !fits(v, 4, Signedness::Unsigned) {
                return Err(DspError::OperandOverflow { value: v, bits: 4 });
            }
        }
        let bsign = if b_signed { Signedness::Signed } else { Signedness::Unsigned };
        if !fits(b, 4, bsign) {
            return Err(DspError::OperandOverflow { value: b, bits: 4 });
        }
        let port27 = a[0] as u32
            | (a[1] as u32) << QUAD_FIELD
            | (a[2] as u32) << (2 * QUAD_FIELD)
            | (a[3] as u32 >> 1) << (3 * QUAD_FIELD);
        Ok(Quad4Layout { port27, port_b: b })
    }
}

/// Returns the DSP product `port27 * b` and the LUT-side partial `a3[0] * b`.
pub fn quad4_pack(a: [i64; 4], b: i64, b_signed: bool) -> Result<(i64, i64), DspError> {
    let layout = Quad4Layout::new(a, b, b_signed)?;
    let product = layout.port27 as i64 * layout.port_b;
    let dsp_out = sign_extend(product as u64 & ACC_MASK, ACC_BITS);
    let lut_fix = (a[3] & 1) * b;
    Ok((dsp_out, lut_fix))
}

/// Recovers `a_i * b` for all four lanes. With a signed `b` each field is
/// sign-interpreted and its sign borrow is returned to the next field up.
pub fn quad4_extract(dsp_out: i64, lut_fix: i64, b_signed: bool) -> [i64; 4] {
    let mask = (1u64 << QUAD_FIELD) - 1;
    let mut rest = dsp_out;
    let mut p = [0i64; 4];
    for lane in p.iter_mut().take(3) {
        let field = rest as u64 & mask;
        *lane = if b_signed { sign_extend(field, QUAD_FIELD) } else { field as i64 };
        rest = (rest - *lane) >> QUAD_FIELD;
    }
    p[3] = (rest << 1) + lut_fix;
    p
}

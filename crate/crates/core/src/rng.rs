//! Counter-based keyed random streams.
//!
//! Every random draw is a pure function of `(seed, stream id, counter)`, where
//! the stream id is built by hashing a path of tags (purpose, level,
//! replicate, particle, iteration, ...). Two tasks that derive different tag
//! paths never share draws, and the output of a task does not depend on what
//! else runs concurrently or in which order.
//!
//! The block function is Philox4x32-10. Normal variates use the inverse CDF
//! (Wichura's AS241), so each normal consumes exactly one 64-bit draw.

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = (a as u64) * (b as u64);
    ((p >> 32) as u32, p as u32)
}

/// Philox4x32 with 10 rounds.
pub fn philox4x32_10(ctr: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = ctr;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

#[inline]
fn fmix64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[inline]
fn mix_id(id: u64, tag: u64) -> u64 {
    // order-sensitive: derive(a).derive(b) != derive(b).derive(a)
    fmix64(id.rotate_left(17).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ fmix64(tag ^ 0xD6E8_FEB8_6659_FD93))
}

/// What a stream is used for. The discriminant is the first tag of the key
/// path, so streams for different purposes never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Path = 1,
    Smc = 2,
    Chain = 3,
    Level = 4,
    Repetition = 5,
    GroundTruth = 6,
    Pilot = 7,
    Validation = 8,
    Demo = 9,
    MonteCarlo = 10,
}

/// Structured key identifying one independent stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub purpose: Purpose,
    pub level: u32,
    pub replicate: u64,
    pub particle: u64,
}

impl StreamKey {
    pub fn new(seed: u64, purpose: Purpose) -> Self {
        Self {
            seed,
            purpose,
            level: 0,
            replicate: 0,
            particle: 0,
        }
    }

    pub fn level(mut self, level: u32) -> Self {
        self.level = level;
        self
    }

    pub fn replicate(mut self, replicate: u64) -> Self {
        self.replicate = replicate;
        self
    }

    pub fn particle(mut self, particle: u64) -> Self {
        self.particle = particle;
        self
    }

    pub fn stream(&self) -> Stream {
        Stream::new(self.seed)
            .derive(self.purpose as u64)
            .derive(self.level as u64)
            .derive(self.replicate)
            .derive(self.particle)
    }
}

/// A position in a keyed counter-based random sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stream {
    key: [u32; 2],
    id: u64,
    counter: u64,
    buf: [u32; 4],
    pos: u8,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self {
            key: [seed as u32, (seed >> 32) as u32],
            id: 0,
            counter: 0,
            buf: [0; 4],
            pos: 4,
        }
    }

    /// Independent child stream identified by `tag`. Depends only on this
    /// stream's identity, not on how much of it has been consumed.
    pub fn derive(&self, tag: u64) -> Stream {
        Stream {
            key: self.key,
            id: mix_id(self.id, tag),
            counter: 0,
            buf: [0; 4],
            pos: 4,
        }
    }

    /// Independent child stream identified by `tag` and the current position.
    /// Does not consume draws from `self`.
    pub fn sibling(&self, tag: u64) -> Stream {
        let here = (self.counter << 3) | self.pos as u64;
        self.derive(mix_id(here, tag))
    }

    #[inline]
    fn refill(&mut self) {
        let ctr = [
            self.counter as u32,
            (self.counter >> 32) as u32,
            self.id as u32,
            (self.id >> 32) as u32,
        ];
        self.buf = philox4x32_10(ctr, self.key);
        self.counter = self.counter.wrapping_add(1);
        self.pos = 0;
    }

    #[inline]
    pub fn next_u32(&mut self) -> u32 {
        if self.pos >= 4 {
            self.refill();
        }
        let v = self.buf[self.pos as usize];
        self.pos += 1;
        v
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let lo = self.next_u32() as u64;
        let hi = self.next_u32() as u64;
        (hi << 32) | lo
    }

    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal variate.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        inverse_normal_cdf(self.uniform())
    }
}

/// Inverse of the standard normal CDF (Wichura, AS241 PPND16), accurate to
/// about 1e-16 relative.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
            + 6.726_577_092_700_87e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5)
            * q;
        let den = ((((((5.226_495_278_852_545e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return num / den;
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = libm::sqrt(-libm::log(r));
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_8e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_758_8)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_445_9e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_879e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

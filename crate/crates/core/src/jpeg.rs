//! Baseline sequential JPEG encoder.
//!
//! Output is pinned: JFIF container, IJG quality scaling of the Annex K
//! quantization tables, the Annex K Huffman tables, 4:2:0 chroma subsampling
//! for color input, and a scalar floating-point DCT. Everything is computed
//! in a fixed order so the same image and quality always produce the same
//! bytes.

use crate::error::{Error, Result};
use crate::image::{quantize_u8, Image};

const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27,
    20, 13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58,
    59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
];

const LUMA_QUANT: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, 12, 12, 14, 19, 26, 58, 60, 55, 14, 13, 16, 24, 40, 57, 69,
    56, 14, 17, 22, 29, 51, 87, 80, 62, 18, 22, 37, 56, 68, 109, 103, 77, 24, 35, 55, 64, 81, 104,
    113, 92, 49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99,
];

const CHROMA_QUANT: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99, 24, 26, 56, 99, 99, 99, 99,
    99, 47, 66, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
];

const DC_LUMA_BITS: [u8; 16] = [0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
const DC_CHROMA_BITS: [u8; 16] = [0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0];
const DC_VALUES: [u8; 12] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11];

const AC_LUMA_BITS: [u8; 16] = [0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7d];
const AC_LUMA_VALUES: [u8; 162] = [
    0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06, 0x13, 0x51, 0x61,
    0x07, 0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xa1, 0x08, 0x23, 0x42, 0xb1, 0xc1, 0x15, 0x52,
    0xd1, 0xf0, 0x24, 0x33, 0x62, 0x72, 0x82, 0x09, 0x0a, 0x16, 0x17, 0x18, 0x19, 0x1a, 0x25,
    0x26, 0x27, 0x28, 0x29, 0x2a, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x43, 0x44, 0x45,
    0x46, 0x47, 0x48, 0x49, 0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5a, 0x63, 0x64,
    0x65, 0x66, 0x67, 0x68, 0x69, 0x6a, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7a, 0x83,
    0x84, 0x85, 0x86, 0x87, 0x88, 0x89, 0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99,
    0x9a, 0xa2, 0xa3, 0xa4, 0xa5, 0xa6, 0xa7, 0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4, 0xb5, 0xb6,
    0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3, 0xc4, 0xc5, 0xc6, 0xc7, 0xc8, 0xc9, 0xca, 0xd2, 0xd3,
    0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda, 0xe1, 0xe2, 0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8,
    0xe9, 0xea, 0xf1, 0xf2, 0xf3, 0xf4, 0xf5, 0xf6, 0xf7, 0xf8, 0xf9, 0xfa,
];

const AC_CHROMA_BITS: [u8; 16] = [0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 0x77];
const AC_CHROMA_VALUES: [u8; 162] = [
    0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21, 0x31, 0x06, 0x12, 0x41, 0x51, 0x07, 0x61,
    0x71, 0x13, 0x22, 0x32, 0x81, 0x08, 0x14, 0x42, 0x91, 0xa1, 0xb1, 0xc1, 0x09, 0x23, 0x33,
    0x52, 0xf0, 0x15, 0x62, 0x72, 0xd1, 0x0a, 0x16, 0x24, 0x34, 0xe1, 0x25, 0xf1, 0x17, 0x18,
    0x19, 0x1a, 0x26, 0x27, 0x28, 0x29, 0x2a, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x43, 0x44,
    0x45, 0x46, 0x47, 0x48, 0x49, 0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5a, 0x63,
    0x64, 0x65, 0x66, 0x67, 0x68, 0x69, 0x6a, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7a,
    0x82, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89, 0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97,
    0x98, 0x99, 0x9a, 0xa2, 0xa3, 0xa4, 0xa5, 0xa6, 0xa7, 0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4,
    0xb5, 0xb6, 0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3, 0xc4, 0xc5, 0xc6, 0xc7, 0xc8, 0xc9, 0xca,
    0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda, 0xe2, 0xe3, 0xe4, 0xe5, 0xe6, 0xe7,
    0xe8, 0xe9, 0xea, 0xf2, 0xf3, 0xf4, 0xf5, 0xf6, 0xf7, 0xf8, 0xf9, 0xfa,
];

/// IJG quality scaling of a base quantization table, natural order.
pub fn scaled_quant_table(base: &[u16; 64], quality: u8) -> [u16; 64] {
    let q = quality.clamp(1, 100) as u32;
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let mut out = [0u16; 64];
    for (o, &b) in out.iter_mut().zip(base.iter()) {
        *o = ((b as u32 * scale + 50) / 100).clamp(1, 255) as u16;
    }
    out
}

struct HuffTable {
    code: [u16; 256],
    len: [u8; 256],
}

impl HuffTable {
    fn build(bits: &[u8; 16], values: &[u8]) -> Self {
        let mut table = HuffTable {
            code: [0; 256],
            len: [0; 256],
        };
        let mut code: u16 = 0;
        let mut k = 0;
        for (i, &count) in bits.iter().enumerate() {
            for _ in 0..count {
                let sym = values[k] as usize;
                table.code[sym] = code;
                table.len[sym] = (i + 1) as u8;
                code += 1;
                k += 1;
            }
            code <<= 1;
        }
        table
    }
}

struct BitWriter {
    out: Vec<u8>,
    acc: u32,
    nbits: u32,
}

impl BitWriter {
    fn new(out: Vec<u8>) -> Self {
        Self { out, acc: 0, nbits: 0 }
    }

    fn put(&mut self, bits: u16, len: u8) {
        debug_assert!(len <= 16);
        self.acc = (self.acc << len) | (bits as u32 & ((1u32 << len) - 1));
        self.nbits += len as u32;
        while self.nbits >= 8 {
            let byte = (self.acc >> (self.nbits - 8)) as u8;
            self.out.push(byte);
            if byte == 0xFF {
                self.out.push(0x00);
            }
            self.nbits -= 8;
        }
        self.acc &= (1u32 << self.nbits) - 1;
    }

    fn finish(mut self) -> Vec<u8> {
        if self.nbits > 0 {
            let pad = 8 - self.nbits as u8;
            self.put((1u16 << pad) - 1, pad);
        }
        self.out
    }
}

fn magnitude_category(v: i32) -> u8 {
    (32 - v.unsigned_abs().leading_zeros()) as u8
}

fn magnitude_bits(v: i32, cat: u8) -> u16 {
    if v >= 0 {
        v as u16
    } else {
        (v - 1) as u16 & ((1u16 << cat) - 1)
    }
}

struct Dct {
    cos: [[f64; 8]; 8],
}

impl Dct {
    fn new() -> Self {
        let mut cos = [[0.0; 8]; 8];
        for (u, row) in cos.iter_mut().enumerate() {
            let cu = if u == 0 { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 };
            for (x, c) in row.iter_mut().enumerate() {
                *c = 0.5 * cu * (((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI) / 16.0).cos();
            }
        }
        Self { cos }
    }

    /// Orthonormal 8x8 forward DCT of a level-shifted block (natural order).
    fn forward(&self, block: &[f64; 64]) -> [f64; 64] {
        let mut tmp = [0.0; 64];
        for y in 0..8 {
            for u in 0..8 {
                let mut s = 0.0;
                for x in 0..8 {
                    s += self.cos[u][x] * block[y * 8 + x];
                }
                tmp[y * 8 + u] = s;
            }
        }
        let mut out = [0.0; 64];
        for u in 0..8 {
            for v in 0..8 {
                let mut s = 0.0;
                for y in 0..8 {
                    s += self.cos[v][y] * tmp[y * 8 + u];
                }
                out[v * 8 + u] = s;
            }
        }
        out
    }
}

/// One component plane in JPEG sample units (0..255, not level shifted).
struct Plane {
    width: usize,
    height: usize,
    samples: Vec<f64>,
}

impl Plane {
    fn at(&self, row: usize, col: usize) -> f64 {
        let r = row.min(self.height - 1);
        let c = col.min(self.width - 1);
        self.samples[r * self.width + c]
    }

    /// 2x2 box average, edge replicated.
    fn subsample_2x2(&self) -> Plane {
        let width = self.width.div_ceil(2);
        let height = self.height.div_ceil(2);
        let mut samples = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let s = self.at(2 * y, 2 * x)
                    + self.at(2 * y, 2 * x + 1)
                    + self.at(2 * y + 1, 2 * x)
                    + self.at(2 * y + 1, 2 * x + 1);
                samples.push(s * 0.25);
            }
        }
        Plane { width, height, samples }
    }
}

struct ComponentCoder<'a> {
    quant: [u16; 64],
    dc: &'a HuffTable,
    ac: &'a HuffTable,
    prev_dc: i32,
}

impl ComponentCoder<'_> {
    fn encode_block(&mut self, dct: &Dct, plane: &Plane, row: usize, col: usize, bw: &mut BitWriter) {
        let mut block = [0.0; 64];
        for y in 0..8 {
            for x in 0..8 {
                block[y * 8 + x] = plane.at(row + y, col + x) - 128.0;
            }
        }
        let coefs = dct.forward(&block);
        let mut q = [0i32; 64];
        for (k, &nat) in ZIGZAG.iter().enumerate() {
            q[k] = (coefs[nat] / self.quant[nat] as f64).round() as i32;
        }

        let diff = q[0] - self.prev_dc;
        self.prev_dc = q[0];
        let cat = magnitude_category(diff);
        bw.put(self.dc.code[cat as usize], self.dc.len[cat as usize]);
        if cat > 0 {
            bw.put(magnitude_bits(diff, cat), cat);
        }

        let mut run = 0u8;
        for &v in &q[1..] {
            if v == 0 {
                run += 1;
                continue;
            }
            while run >= 16 {
                bw.put(self.ac.code[0xF0], self.ac.len[0xF0]);
                run -= 16;
            }
            let cat = magnitude_category(v);
            let sym = ((run << 4) | cat) as usize;
            bw.put(self.ac.code[sym], self.ac.len[sym]);
            bw.put(magnitude_bits(v, cat), cat);
            run = 0;
        }
        if run > 0 {
            bw.put(self.ac.code[0x00], self.ac.len[0x00]);
        }
    }
}

fn write_marker_segment(out: &mut Vec<u8>, marker: u8, payload: &[u8]) {
    out.extend_from_slice(&[0xFF, marker]);
    out.extend_from_slice(&((payload.len() + 2) as u16).to_be_bytes());
    out.extend_from_slice(payload);
}

fn dqt_payload(id: u8, table: &[u16; 64]) -> Vec<u8> {
    let mut p = vec![id];
    p.extend(ZIGZAG.iter().map(|&nat| table[nat] as u8));
    p
}

fn dht_payload(class_id: u8, bits: &[u8; 16], values: &[u8]) -> Vec<u8> {
    let mut p = vec![class_id];
    p.extend_from_slice(bits);
    p.extend_from_slice(values);
    p
}

/// Encodes `img` as a baseline JPEG at `quality` (1..=100).
///
/// Samples are quantized to 8 bits first. Three-channel images are converted
/// to JFIF YCbCr and stored with 4:2:0 chroma subsampling.
pub fn encode(img: &Image, quality: u8) -> Result<Vec<u8>> {
    if !(1..=100).contains(&quality) {
        return Err(Error::arg(format!("JPEG quality must be in 1..=100, got {quality}")));
    }
    let (h, w) = (img.height(), img.width());
    if h > u16::MAX as usize || w > u16::MAX as usize {
        return Err(Error::Encode(format!("{h}x{w} exceeds the JPEG size limit")));
    }
    let color = img.channels() == 3;

    let to_plane = |f: &dyn Fn(usize) -> f64| Plane {
        width: w,
        height: h,
        samples: (0..h * w).map(f).collect(),
    };
    let code = |c: usize, i: usize| quantize_u8(img.plane(c)[i]) as f64;

    let planes: Vec<Plane> = if color {
        let y = to_plane(&|i| 0.299 * code(0, i) + 0.587 * code(1, i) + 0.114 * code(2, i));
        let cb = to_plane(&|i| -0.168736 * code(0, i) - 0.331264 * code(1, i) + 0.5 * code(2, i) + 128.0);
        let cr = to_plane(&|i| 0.5 * code(0, i) - 0.418688 * code(1, i) - 0.081312 * code(2, i) + 128.0);
        vec![y, cb.subsample_2x2(), cr.subsample_2x2()]
    } else {
        vec![to_plane(&|i| code(0, i))]
    };

    let luma_q = scaled_quant_table(&LUMA_QUANT, quality);
    let chroma_q = scaled_quant_table(&CHROMA_QUANT, quality);

    let mut out = vec![0xFF, 0xD8];
    write_marker_segment(&mut out, 0xE0, &[b'J', b'F', b'I', b'F', 0, 1, 1, 0, 0, 1, 0, 1, 0, 0]);
    write_marker_segment(&mut out, 0xDB, &dqt_payload(0, &luma_q));
    if color {
        write_marker_segment(&mut out, 0xDB, &dqt_payload(1, &chroma_q));
    }

    let mut sof = vec![8];
    sof.extend_from_slice(&(h as u16).to_be_bytes());
    sof.extend_from_slice(&(w as u16).to_be_bytes());
    if color {
        sof.extend_from_slice(&[3, 1, 0x22, 0, 2, 0x11, 1, 3, 0x11, 1]);
    } else {
        sof.extend_from_slice(&[1, 1, 0x11, 0]);
    }
    write_marker_segment(&mut out, 0xC0, &sof);

    write_marker_segment(&mut out, 0xC4, &dht_payload(0x00, &DC_LUMA_BITS, &DC_VALUES));
    write_marker_segment(&mut out, 0xC4, &dht_payload(0x10, &AC_LUMA_BITS, &AC_LUMA_VALUES));
    if color {
        write_marker_segment(&mut out, 0xC4, &dht_payload(0x01, &DC_CHROMA_BITS, &DC_VALUES));
        write_marker_segment(&mut out, 0xC4, &dht_payload(0x11, &AC_CHROMA_BITS, &AC_CHROMA_VALUES));
    }

    let sos: Vec<u8> = if color {
        vec![3, 1, 0x00, 2, 0x11, 3, 0x11, 0, 63, 0]
    } else {
        vec![1, 1, 0x00, 0, 63, 0]
    };
    write_marker_segment(&mut out, 0xDA, &sos);

    let dc_luma = HuffTable::build(&DC_LUMA_BITS, &DC_VALUES);
    let ac_luma = HuffTable::build(&AC_LUMA_BITS, &AC_LUMA_VALUES);
    let dc_chroma = HuffTable::build(&DC_CHROMA_BITS, &DC_VALUES);
    let ac_chroma = HuffTable::build(&AC_CHROMA_BITS, &AC_CHROMA_VALUES);
    let dct = Dct::new();

    let mut coders = vec![ComponentCoder {
        quant: luma_q,
        dc: &dc_luma,
        ac: &ac_luma,
        prev_dc: 0,
    }];
    if color {
        for _ in 0..2 {
            coders.push(ComponentCoder {
                quant: chroma_q,
                dc: &dc_chroma,
                ac: &ac_chroma,
                prev_dc: 0,
            });
        }
    }

    let mut bw = BitWriter::new(out);
    let mcu = if color { 16 } else { 8 };
    for my in 0..h.div_ceil(mcu) {
        for mx in 0..w.div_ceil(mcu) {
            if color {
                for by in 0..2 {
                    for bx in 0..2 {
                        coders[0].encode_block(&dct, &planes[0], my * 16 + by * 8, mx * 16 + bx * 8, &mut bw);
                    }
                }
                for c in 1..3 {
                    coders[c].encode_block(&dct, &planes[c], my * 8, mx * 8, &mut bw);
                }
            } else {
                coders[0].encode_block(&dct, &planes[0], my * 8, mx * 8, &mut bw);
            }
        }
    }
    let mut out = bw.finish();
    out.extend_from_slice(&[0xFF, 0xD9]);
    Ok(out)
}

//! Seeded synthetic data: a small two-view corpus on disk, a planted
//! trigram opcode task, an axis-aligned tabular task, and a matrix with
//! one informative and two noise categories.

use std::fmt::Write as _;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::write_manifest;
use crate::error::{Error, Result};
use crate::feature::Category;
use crate::fusion::{FeatureMatrix, FeatureRegistry, RegistryEntry};
use crate::matrix::DenseMatrix;

/// Opcode vocabulary size of the planted task (real ids; 93 is the
/// unknown id and never appears).
pub const TRIGRAM_VOCAB: usize = 94;
const SPECIAL: [usize; 3] = [90, 91, 92];

/// Class `c` carries the `c`-th rotation of three marker opcodes as one
/// contiguous trigram inside 20-39 noise opcodes. All classes share the
/// same three markers, so unigram counts carry no signal. Noise follows
/// a Zipf law with exponent 2 over the 90 ordinary ids, the way a few
/// opcodes such as `mov` and `push` dominate real listings.
pub fn planted_trigram_corpus(per_class: usize, seed: u64) -> Vec<(Vec<usize>, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zipf: Vec<f64> = (1..=SPECIAL[0]).map(|r| (r as f64).powi(-2)).collect();
    let noise = WeightedIndex::new(&zipf).expect("positive weights");
    let mut out = Vec::with_capacity(per_class * 3);
    for i in 0..per_class * 3 {
        let class = i % 3;
        let mut seq: Vec<usize> = (0..rng.gen_range(20..40)).map(|_| noise.sample(&mut rng)).collect();
        let at = rng.gen_range(0..=seq.len());
        seq.splice(at..at, (0..3).map(|j| SPECIAL[(class + j) % 3]));
        out.push((seq, class));
    }
    out
}

/// 90 rows, 2 features, 3 classes: class 0 where x < 1, class 1 where
/// x ≥ 1 and y < 1, class 2 otherwise, with a gap around each boundary.
pub fn axis_aligned_toy(seed: u64) -> (DenseMatrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(90);
    let mut y = Vec::with_capacity(90);
    for i in 0..90 {
        let c = i % 3;
        let (x0, x1) = match c {
            0 => (rng.gen_range(0.0..0.9), rng.gen_range(0.0..2.0)),
            1 => (rng.gen_range(1.1..2.0), rng.gen_range(0.0..0.9)),
            _ => (rng.gen_range(1.1..2.0), rng.gen_range(1.1..2.0)),
        };
        rows.push(vec![x0, x1]);
        y.push(c);
    }
    (DenseMatrix::from_rows(&rows).expect("rectangular"), y)
}

/// `n` labeled rows over three categories. BYTE_MD's first column places
/// each class in its own interval; BYTE_ENT and BYTE_HARALICK, and the
/// second BYTE_MD column, are uniform noise.
pub fn stepwise_matrix(n: usize, classes: usize, seed: u64) -> Result<FeatureMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = vec![
        RegistryEntry {
            category: Category::ByteMd,
            names: vec!["md_signal".into(), "md_noise".into()],
        },
        RegistryEntry {
            category: Category::ByteEnt,
            names: (0..14).map(|i| format!("ent_noise{i}")).collect(),
        },
        RegistryEntry {
            category: Category::ByteHaralick,
            names: (0..13).map(|i| format!("har_noise{i}")).collect(),
        },
    ];
    let registry = FeatureRegistry::new(entries)?;
    let mut data = Vec::with_capacity(n * 29);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        data.push(c as f64 * 10.0 + rng.gen_range(0.0..5.0));
        for _ in 1..29 {
            data.push(rng.gen_range(0.0..1.0));
        }
        labels.push(Some(c));
    }
    FeatureMatrix::new(
        registry,
        (0..n).map(|i| format!("s{i:03}")).collect(),
        labels,
        classes,
        DenseMatrix::new(n, 29, data)?,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub labeled_per_class: usize,
    pub classes: usize,
    pub unlabeled: usize,
    pub seed: u64,
}

impl Default for FixtureSpec {
    /// 3 classes × 8 labeled samples plus 6 unlabeled: 30 samples.
    fn default() -> Self {
        FixtureSpec {
            labeled_per_class: 8,
            classes: 3,
            unlabeled: 6,
            seed: 2015,
        }
    }
}

fn family_bytes(class: usize, rng: &mut ChaCha8Rng) -> Vec<Option<u8>> {
    let len = rng.gen_range(1500..4500);
    let mut out: Vec<Option<u8>> = Vec::with_capacity(len);
    out.extend([Some(0x4D), Some(0x5A), Some(0x90), Some(0x00)]);
    while out.len() < len {
        match class % 3 {
            // packed: near-uniform bytes
            0 => out.push(Some(rng.gen())),
            // text-heavy: printable ASCII and NUL runs
            1 => {
                if rng.gen_bool(0.1) {
                    out.extend(std::iter::repeat_n(Some(0), rng.gen_range(4..20)));
                } else {
                    out.push(Some(rng.gen_range(b'a'..=b'z')));
                }
            }
            // structured code with unmapped gaps
            _ => {
                if rng.gen_bool(0.02) {
                    out.extend(std::iter::repeat_n(None, 16));
                } else {
                    let pat = [0x55, 0x8B, 0xEC, 0x83, 0xC4, 0x04, 0xC3];
                    out.push(Some(pat[rng.gen_range(0..pat.len())]));
                }
            }
        }
    }
    out.truncate(len);
    out
}

fn hex_text(bytes: &[Option<u8>], start: u64) -> String {
    let mut s = String::new();
    for (i, chunk) in bytes.chunks(16).enumerate() {
        write!(s, "{:08X}", start + 16 * i as u64).expect("string write");
        for b in chunk {
            match b {
                Some(v) => write!(s, " {v:02X}").expect("string write"),
                None => s.push_str(" ??"),
            }
        }
        s.push_str("\r\n");
    }
    s
}

fn asm_text(class: usize, rng: &mut ChaCha8Rng) -> String {
    let mut s = String::new();
    let mut addr = 0x0040_1000u64;
    let mut r2 = ChaCha8Rng::seed_from_u64(rng.gen());
    let mut step = ChaCha8Rng::seed_from_u64(rng.gen());
    let mut line = |s: &mut String, sec: &str, body: &str, addr: &mut u64| {
        writeln!(s, "{sec}:{:08X} {body}", *addr).expect("string write");
        *addr += step.gen_range(1..6);
    };
    s.push_str("; Input MD5   : synthetic\r\n");
    line(&mut s, "HEADER", "; Segment type: Pure code", &mut addr);
    let n_code = r2.gen_range(60..140);
    let (code_sec, ops): (&str, &[&str]) = match class % 3 {
        0 => ("UPX1", &["mov", "jmp", "xor", "add", "loop", "dec", "jnz"]),
        1 => (".text", &["push", "mov", "call", "pop", "lea", "test", "jz", "retn"]),
        _ => (".text", &["mov", "cmp", "jnz", "xor", "and", "shl", "sub", "inc"]),
    };
    let regs = ["eax", "ebx", "ecx", "edx", "esi", "edi", "ebp", "esp"];
    let apis = [
        "CreateFileA",
        "WriteFile",
        "ReadFile",
        "CloseHandle",
        "GetProcAddress",
        "LoadLibraryA",
        "Sleep",
    ];
    for _ in 0..n_code {
        let op = ops[r2.gen_range(0..ops.len())];
        let body = match op {
            "call" => format!("FF 15 00 20 40 00 call    ds:{}", apis[r2.gen_range(0..apis.len())]),
            "push" | "pop" | "inc" | "dec" => format!("50 {op}     {}", regs[r2.gen_range(0..regs.len())]),
            "retn" | "loop" => format!("C3 {op}"),
            "jz" | "jnz" | "jmp" => format!("74 05 {op}      short loc_{:X}", 0x401000 + r2.gen_range(0..0x400)),
            _ => format!(
                "8B 45 FC {op}     {}, [{}+var_{}]",
                regs[r2.gen_range(0..regs.len())],
                regs[r2.gen_range(0..regs.len())],
                r2.gen_range(4..32)
            ),
        };
        line(&mut s, code_sec, &body, &mut addr);
    }
    let (data_sec, n_data) = match class % 3 {
        0 => ("UPX0", r2.gen_range(40..80)),
        1 => (".rdata", r2.gen_range(10..30)),
        _ => (".data", r2.gen_range(20..50)),
    };
    for i in 0..n_data {
        let body = match (class % 3, i % 4) {
            (0, _) => "db    0".to_string(),
            (1, 0) => "aKernel32Dll db 'KERNEL32.dll',0".to_string(),
            (1, _) => format!("db  {}", r2.gen_range(1..255)),
            (_, 0) => format!("dword_{i:X} dd 1, 2, 3, {}", r2.gen_range(0..9)),
            (_, 1) => "dd 0, 0, 0, 0, 0".to_string(),
            (_, 2) => "dw ?".to_string(),
            _ => format!("db {} dup(?)", r2.gen_range(2..16)),
        };
        line(&mut s, data_sec, &body, &mut addr);
    }
    line(&mut s, ".idata", "; Imports from KERNEL32.dll", &mut addr);
    for a in apis.iter().take(2 + class % 3) {
        line(
            &mut s,
            ".idata",
            &format!("extrn {a}:dword ; DATA XREF: sub_401000+4r"),
            &mut addr,
        );
    }
    s
}

/// Writes `<id>.bytes`, `<id>.asm` and `manifest.csv` into `dir`.
/// Labeled samples come first, class-interleaved; unlabeled samples
/// follow with an empty label.
pub fn write_fixture_corpus(dir: impl AsRef<Path>, spec: &FixtureSpec) -> Result<Vec<String>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let total = spec.labeled_per_class * spec.classes + spec.unlabeled;
    let mut rows = Vec::with_capacity(total);
    for i in 0..total {
        let labeled = i < spec.labeled_per_class * spec.classes;
        let class = if labeled {
            i % spec.classes
        } else {
            rng.gen_range(0..spec.classes)
        };
        let id = format!("fx{i:03}{}", if labeled { "" } else { "t" });
        let hex = hex_text(&family_bytes(class, &mut rng), 0x0040_0000);
        let asm = asm_text(class, &mut rng);
        for (ext, text) in [("bytes", &hex), ("asm", &asm)] {
            let p = dir.join(format!("{id}.{ext}"));
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        rows.push((
            id.clone(),
            labeled.then_some(class),
            format!("{id}.bytes"),
            format!("{id}.asm"),
        ));
    }
    write_manifest(dir.join("manifest.csv"), &rows)?;
    Ok(rows.into_iter().map(|r| r.0).collect())
}

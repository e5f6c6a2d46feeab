//! Synthetic paired image+report corpus with a planted cross-modal signal.
//!
//! Construction, per case (all draws from one SplitMix64 stream seeded by
//! the corpus seed, in exactly this order — the golden file depends on it):
//!
//! 1. image attribute `a_img ~ below(2)` — blob texture, solid bright (0)
//!    vs checkerboard (1);
//! 2. text attribute `a_txt ~ below(2)` — report keyword, "solid" (0) vs
//!    "diffuse" (1);
//! 3. true quadrant `q ~ below(4)` (row-major: 0 upper-left, 1 upper-right,
//!    2 lower-left, 3 lower-right);
//! 4. decoy quadrant `(q + 1 + below(3)) % 4`;
//! 5. if `noise_std > 0`: G*G background normals, row-major;
//! 6. distractor prefix length `below(distractor_tokens + 1)`;
//! 7. `distractor_tokens` distractor word picks, `below(pool size)` each.
//!
//! The image is background `N(0.2, noise_std)` clipped to `[0, 1]` with TWO
//! blobs of side `G/4` rendered in the two chosen quadrants, both with the
//! `a_img` texture and each centered in its quadrant; only the blob in
//! quadrant `q` is the true lesion. The report names the keyword and the
//! true quadrant, so localization is ambiguous from the image alone and the
//! label `a_img XOR a_txt` is pairwise-independent of each single modality.
//!
//! The mask is the rasterization of the true box onto the g-by-g grid (a
//! cell is set when its pixel footprint overlaps the blob's), and the
//! description follows the fixed template
//! `lesion <row> <col> <keyword> class <label-word>` plus EOS.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::heads::BBox;
use crate::rng::{hash64, stream, Rng};
use crate::tensor::Tensor;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

/// Content words in fixed id order (after the four special tokens).
const CONTENT_WORDS: [&str; 25] = [
    "lesion", "appears", "in", "region", "solid", "diffuse", "upper", "lower", "left", "right",
    "class", "zero", "one", "patient", "scan", "noted", "routine", "margin", "tissue", "contrast",
    "study", "series", "axial", "clinical", "finding",
];

/// Distractor pool: the trailing 12 content words.
const DISTRACTOR_POOL_START: usize = 13;

/// Token string <-> id bijection with fixed special ids
/// PAD=0, BOS=1, EOS=2, UNK=3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocab {
    /// The canonical corpus vocabulary: specials followed by the fixed
    /// content word list.
    pub fn corpus_default() -> Vocab {
        let mut words: Vec<String> = ["<pad>", "<bos>", "<eos>", "<unk>"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        words.extend(CONTENT_WORDS.iter().map(|s| s.to_string()));
        let ids = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocab { words, ids }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.ids.get(word).copied()
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(|s| s.as_str())
    }

    /// Whitespace tokenization with ASCII case folding; unknown words map
    /// to UNK.
    pub fn tokenize(&self, text: &str) -> Vec<usize> {
        text.split_whitespace()
            .map(|w| self.id(&w.to_ascii_lowercase()).unwrap_or(UNK))
            .collect()
    }

    /// Space-joined words for a token id slice.
    pub fn detokenize(&self, tokens: &[usize]) -> String {
        let mut out = String::new();
        for (i, &t) in tokens.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(self.word(t).unwrap_or("<unk>"));
        }
        out
    }
}

/// One paired sample.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseRecord {
    pub id: usize,
    /// `[1, G, G]`, values in `[0, 1]`.
    pub image: Tensor,
    /// Report token ids.
    pub report: Vec<usize>,
    pub label: usize,
    /// Normalized box tight around the true lesion blob.
    pub bbox: BBox,
    /// `[g, g]` binary rasterization of the box.
    pub mask: Tensor,
    /// Target description token ids, ending with EOS.
    pub description: Vec<usize>,
}

/// Ground-truth latent attributes behind a case (exposed for analysis and
/// the independence checks in the tests).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaseAttributes {
    pub a_img: usize,
    pub a_txt: usize,
    pub quadrant: usize,
    pub decoy: usize,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CorpusConfig {
    pub num_cases: usize,
    /// Image side G; must be a positive multiple of 4, at least 8.
    pub image_side: usize,
    /// Mask grid side g; must divide G.
    pub mask_side: usize,
    /// Background pixel noise standard deviation.
    pub noise_std: f64,
    /// Distractor tokens added around the report core phrase.
    pub distractor_tokens: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            num_cases: 2000,
            image_side: 16,
            mask_side: 4,
            noise_std: 0.05,
            distractor_tokens: 5,
            seed: 0,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_cases == 0 {
            return Err(Error::InvalidArgument("num_cases must be >= 1".into()));
        }
        let g = self.image_side;
        if g < 8 || g % 4 != 0 {
            return Err(Error::InvalidArgument(format!(
                "image side must be a multiple of 4 and >= 8, got {g}"
            )));
        }
        if self.mask_side == 0 || g % self.mask_side != 0 {
            return Err(Error::InvalidArgument(format!(
                "mask side must divide the image side ({} vs {g})",
                self.mask_side
            )));
        }
        if self.noise_std < 0.0 {
            return Err(Error::InvalidArgument("noise_std must be >= 0".into()));
        }
        Ok(())
    }

    /// The corpus vocabulary (fixed; templates pin the word set).
    pub fn vocab(&self) -> Vocab {
        Vocab::corpus_default()
    }
}

fn quadrant_words(q: usize) -> (&'static str, &'static str) {
    let row = if q / 2 == 0 { "upper" } else { "lower" };
    let col = if q % 2 == 0 { "left" } else { "right" };
    (row, col)
}

/// Generate the corpus together with each case's latent attributes.
pub fn generate_with_attributes(
    config: &CorpusConfig,
) -> Result<Vec<(CaseRecord, CaseAttributes)>> {
    config.validate()?;
    let vocab = Vocab::corpus_default();
    let g = config.image_side;
    let blob = g / 4;
    let quad = g / 2;
    let offset = (quad - blob) / 2;
    let mut rng = Rng::from_seeds(&[config.seed, stream::CORPUS]);
    let mut out = Vec::with_capacity(config.num_cases);

    let word = |w: &str| vocab.id(w).expect("template word in vocab");

    for id in 0..config.num_cases {
        let a_img = rng.below(2);
        let a_txt = rng.below(2);
        let q = rng.below(4);
        let decoy = (q + 1 + rng.below(3)) % 4;

        // Background.
        let mut pixels = if config.noise_std > 0.0 {
            (0..g * g)
                .map(|_| (0.2 + config.noise_std * rng.normal()).clamp(0.0, 1.0))
                .collect::<Vec<f64>>()
        } else {
            vec![0.2; g * g]
        };

        // Both blobs share the a_img texture; each is centered in its
        // quadrant so the box is a deterministic function of the quadrant.
        let mut stamp = |quadrant: usize| -> (usize, usize) {
            let r0 = (quadrant / 2) * quad + offset;
            let c0 = (quadrant % 2) * quad + offset;
            for r in r0..r0 + blob {
                for c in c0..c0 + blob {
                    pixels[r * g + c] = if a_img == 0 {
                        0.9
                    } else if (r + c) % 2 == 0 {
                        0.9
                    } else {
                        0.1
                    };
                }
            }
            (r0, c0)
        };
        let (r0, c0) = stamp(q);
        stamp(decoy);

        let bbox = BBox::new(
            c0 as f64 / g as f64,
            r0 as f64 / g as f64,
            (c0 + blob) as f64 / g as f64,
            (r0 + blob) as f64 / g as f64,
        )?;

        // Mask: grid cells whose pixel footprint overlaps the blob.
        let cell = g / config.mask_side;
        let mut mask = vec![0.0; config.mask_side * config.mask_side];
        for i in 0..config.mask_side {
            for j in 0..config.mask_side {
                let row_hit = i * cell < r0 + blob && r0 < (i + 1) * cell;
                let col_hit = j * cell < c0 + blob && c0 < (j + 1) * cell;
                if row_hit && col_hit {
                    mask[i * config.mask_side + j] = 1.0;
                }
            }
        }

        let keyword = if a_txt == 0 { "solid" } else { "diffuse" };
        let (row_word, col_word) = quadrant_words(q);
        let label = a_img ^ a_txt;

        // Report: distractor prefix + core phrase + distractor suffix.
        let n_prefix = rng.below(config.distractor_tokens + 1);
        let picks: Vec<usize> = (0..config.distractor_tokens)
            .map(|_| 4 + DISTRACTOR_POOL_START + rng.below(CONTENT_WORDS.len() - DISTRACTOR_POOL_START))
            .collect();
        let core = [
            word("lesion"),
            word("appears"),
            word(keyword),
            word("in"),
            word(row_word),
            word(col_word),
            word("region"),
        ];
        let mut report = Vec::with_capacity(config.distractor_tokens + core.len());
        report.extend_from_slice(&picks[..n_prefix]);
        report.extend_from_slice(&core);
        report.extend_from_slice(&picks[n_prefix..]);

        let description = vec![
            word("lesion"),
            word(row_word),
            word(col_word),
            word(keyword),
            word("class"),
            word(if label == 0 { "zero" } else { "one" }),
            EOS,
        ];

        out.push((
            CaseRecord {
                id,
                image: Tensor::from_vec(&[1, g, g], pixels)?,
                report,
                label,
                bbox,
                mask: Tensor::from_vec(&[config.mask_side, config.mask_side], mask)?,
                description,
            },
            CaseAttributes {
                a_img,
                a_txt,
                quadrant: q,
                decoy,
            },
        ))
    }
    Ok(out)
}

/// Generate the corpus.
pub fn generate(config: &CorpusConfig) -> Result<Vec<CaseRecord>> {
    Ok(generate_with_attributes(config)?
        .into_iter()
        .map(|(r, _)| r)
        .collect())
}

/// Deterministic 70/15/15 split: cases are ranked by `hash64(id)`, the
/// first `n - floor(0.15 n) - floor(0.15 n)` go to train, the next
/// `floor(0.15 n)` to validation, the rest to test; each split is then
/// ordered by id.
pub fn split_corpus(records: Vec<CaseRecord>) -> (Vec<CaseRecord>, Vec<CaseRecord>, Vec<CaseRecord>) {
    let n = records.len();
    let n_val = n * 15 / 100;
    let n_test = n * 15 / 100;
    let n_train = n - n_val - n_test;
    let mut ranked: Vec<CaseRecord> = records;
    ranked.sort_by_key(|r| (hash64(r.id as u64), r.id));
    let mut test = ranked.split_off(n_train + n_val);
    let mut val = ranked.split_off(n_train);
    let mut train = ranked;
    train.sort_by_key(|r| r.id);
    val.sort_by_key(|r| r.id);
    test.sort_by_key(|r| r.id);
    (train, val, test)
}

/// Line schema for corpus files (`"v": 1`).
#[derive(serde::Serialize, serde::Deserialize)]
struct RecordLine {
    v: u32,
    id: usize,
    image: Vec<Vec<Vec<f64>>>,
    report: String,
    label: usize,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    mask: Vec<Vec<u8>>,
    description: String,
}

/// Serialize records as line-delimited JSON. Reports and descriptions are
/// stored as strings (the description's trailing EOS is stripped and
/// re-added on load).
pub fn save_corpus(records: &[CaseRecord], path: &Path) -> Result<()> {
    let vocab = Vocab::corpus_default();
    let mut buf = String::new();
    for r in records {
        let g = r.image.dims()[1];
        let image = vec![(0..g)
            .map(|i| r.image.data()[i * g..(i + 1) * g].to_vec())
            .collect::<Vec<_>>()];
        let ms = r.mask.dims()[0];
        let mask = (0..ms)
            .map(|i| {
                r.mask.data()[i * ms..(i + 1) * ms]
                    .iter()
                    .map(|&v| v as u8)
                    .collect()
            })
            .collect();
        let desc_tokens = match r.description.split_last() {
            Some((&last, rest)) if last == EOS => rest,
            _ => &r.description[..],
        };
        let line = RecordLine {
            v: 1,
            id: r.id,
            image,
            report: vocab.detokenize(&r.report),
            label: r.label,
            bbox: r.bbox.coords(),
            mask,
            description: vocab.detokenize(desc_tokens),
        };
        let json = serde_json::to_string(&line)
            .map_err(|e| Error::InvalidArgument(format!("serialize record {}: {e}", r.id)))?;
        writeln!(buf, "{json}").expect("string write");
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Load a corpus saved by [`save_corpus`]. Malformed or incomplete lines
/// fail with the 1-based line number; serde names any missing field.
pub fn load_corpus(path: &Path) -> Result<Vec<CaseRecord>> {
    let vocab = Vocab::corpus_default();
    let file =
        std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RecordLine = serde_json::from_str(&line).map_err(|e| Error::CorpusParse {
            path: path.display().to_string(),
            line: line_no,
            message: e.to_string(),
        })?;
        if parsed.v != 1 {
            return Err(Error::CorpusParse {
                path: path.display().to_string(),
                line: line_no,
                message: format!("unsupported schema version {}", parsed.v),
            });
        }
        let g = parsed.image.first().map(|p| p.len()).unwrap_or(0);
        let pixels: Vec<f64> = parsed.image.into_iter().flatten().flatten().collect();
        if pixels.len() != g * g {
            return Err(Error::CorpusParse {
                path: path.display().to_string(),
                line: line_no,
                message: "image is not a [1, G, G] grid".into(),
            });
        }
        let ms = parsed.mask.len();
        let mask: Vec<f64> = parsed
            .mask
            .into_iter()
            .flatten()
            .map(|v| v as f64)
            .collect();
        if mask.len() != ms * ms {
            return Err(Error::CorpusParse {
                path: path.display().to_string(),
                line: line_no,
                message: "mask is not a square grid".into(),
            });
        }
        let bbox = BBox::new(parsed.bbox[0], parsed.bbox[1], parsed.bbox[2], parsed.bbox[3])
            .map_err(|e| Error::CorpusParse {
                path: path.display().to_string(),
                line: line_no,
                message: e.to_string(),
            })?;
        let mut description = vocab.tokenize(&parsed.description);
        description.push(EOS);
        out.push(CaseRecord {
            id: parsed.id,
            image: Tensor::from_vec(&[1, g, g], pixels)?,
            report: vocab.tokenize(&parsed.report),
            label: parsed.label,
            bbox,
            mask: Tensor::from_vec(&[ms, ms], mask)?,
            description,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> CorpusConfig {
        CorpusConfig {
            num_cases: 64,
            image_side: 8,
            mask_side: 4,
            noise_std: 0.0,
            distractor_tokens: 5,
            seed: 11,
        }
    }

    #[test]
    fn vocab_specials_and_round_trip() {
        let v = Vocab::corpus_default();
        assert_eq!(v.id("<pad>"), Some(PAD));
        assert_eq!(v.id("<bos>"), Some(BOS));
        assert_eq!(v.id("<eos>"), Some(EOS));
        assert_eq!(v.id("<unk>"), Some(UNK));
        // Bijection.
        for id in 0..v.len() {
            assert_eq!(v.id(v.word(id).unwrap()), Some(id));
        }
    }

    #[test]
    fn tokenize_contract() {
        let v = Vocab::corpus_default();
        assert_eq!(v.tokenize(""), Vec::<usize>::new());
        let ids = v.tokenize("lesion upper left");
        assert_eq!(
            ids,
            vec![v.id("lesion").unwrap(), v.id("upper").unwrap(), v.id("left").unwrap()]
        );
        assert_eq!(v.tokenize("lesion zzz"), vec![v.id("lesion").unwrap(), UNK]);
        // ASCII folding only.
        assert_eq!(v.tokenize("LESION"), vec![v.id("lesion").unwrap()]);
    }

    #[test]
    fn label_is_xor_of_attributes() {
        let cases = generate_with_attributes(&tiny_config()).unwrap();
        for (record, attrs) in &cases {
            assert_eq!(record.label, attrs.a_img ^ attrs.a_txt);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&tiny_config()).unwrap();
        let b = generate(&tiny_config()).unwrap();
        assert_eq!(a, b);
        let mut other = tiny_config();
        other.seed = 12;
        assert_ne!(a, generate(&other).unwrap());
    }

    #[test]
    fn images_have_two_blobs_and_boxes_inside_bounds() {
        let cases = generate_with_attributes(&tiny_config()).unwrap();
        for (record, attrs) in &cases {
            assert_ne!(attrs.quadrant, attrs.decoy);
            let b = &record.bbox;
            assert!(b.x1 >= 0.0 && b.x2 <= 1.0 && b.y1 >= 0.0 && b.y2 <= 1.0);
            // Count bright pixels: two blobs of (G/4)^2 each, texture
            // dependent. Solid: all 0.9. Checkerboard: half 0.9, half 0.3.
            let g = record.image.dims()[1];
            let bright = record
                .image
                .data()
                .iter()
                .filter(|&&v| (v - 0.9).abs() < 1e-12)
                .count();
            let blob_area = (g / 4) * (g / 4);
            if attrs.a_img == 0 {
                assert_eq!(bright, 2 * blob_area);
            } else {
                assert_eq!(bright, blob_area); // half of each of two blobs
            }
        }
    }

    #[test]
    fn mask_matches_box_rasterization() {
        let cases = generate(&tiny_config()).unwrap();
        for record in &cases {
            let g = record.image.dims()[1] as f64;
            let ms = record.mask.dims()[0];
            let cell = g / ms as f64;
            for i in 0..ms {
                for j in 0..ms {
                    let row_hit = (i as f64) * cell < record.bbox.y2 * g
                        && record.bbox.y1 * g < (i as f64 + 1.0) * cell;
                    let col_hit = (j as f64) * cell < record.bbox.x2 * g
                        && record.bbox.x1 * g < (j as f64 + 1.0) * cell;
                    let expect = if row_hit && col_hit { 1.0 } else { 0.0 };
                    assert_eq!(record.mask.at2(i, j), expect, "cell ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn descriptions_follow_template_grammar() {
        let v = Vocab::corpus_default();
        let cases = generate(&tiny_config()).unwrap();
        for record in &cases {
            assert_eq!(*record.description.last().unwrap(), EOS);
            let words: Vec<&str> = record.description[..record.description.len() - 1]
                .iter()
                .map(|&t| v.word(t).unwrap())
                .collect();
            assert_eq!(words.len(), 6);
            assert_eq!(words[0], "lesion");
            assert!(["upper", "lower"].contains(&words[1]));
            assert!(["left", "right"].contains(&words[2]));
            assert!(["solid", "diffuse"].contains(&words[3]));
            assert_eq!(words[4], "class");
            assert!(["zero", "one"].contains(&words[5]));
        }
    }

    #[test]
    fn report_contains_keyword_and_quadrant_phrase() {
        let v = Vocab::corpus_default();
        let cases = generate_with_attributes(&tiny_config()).unwrap();
        for (record, attrs) in &cases {
            let words: Vec<&str> = record.report.iter().map(|&t| v.word(t).unwrap()).collect();
            let keyword = if attrs.a_txt == 0 { "solid" } else { "diffuse" };
            let (row, col) = super::quadrant_words(attrs.quadrant);
            assert!(words.contains(&keyword));
            assert!(words.contains(&row));
            assert!(words.contains(&col));
            assert_eq!(words.len(), 7 + tiny_config().distractor_tokens);
        }
    }

    #[test]
    fn label_mutually_independent_of_each_modality() {
        let config = CorpusConfig {
            num_cases: 2000,
            seed: 77,
            ..CorpusConfig::default()
        };
        let cases = generate_with_attributes(&config).unwrap();
        let mi = |get: &dyn Fn(&CaseAttributes) -> usize| -> f64 {
            let mut joint = [[0usize; 2]; 2];
            for (record, attrs) in &cases {
                joint[record.label][get(attrs)] += 1;
            }
            let n = cases.len() as f64;
            let mut mi = 0.0;
            for l in 0..2 {
                for a in 0..2 {
                    let pxy = joint[l][a] as f64 / n;
                    if pxy == 0.0 {
                        continue;
                    }
                    let px = (joint[l][0] + joint[l][1]) as f64 / n;
                    let py = (joint[0][a] + joint[1][a]) as f64 / n;
                    mi += pxy * (pxy / (px * py)).ln();
                }
            }
            mi / std::f64::consts::LN_2
        };
        let mi_img = mi(&|a: &CaseAttributes| a.a_img);
        let mi_txt = mi(&|a: &CaseAttributes| a.a_txt);
        assert!(mi_img < 0.01, "label leaks through the image alone: {mi_img}");
        assert!(mi_txt < 0.01, "label leaks through the text alone: {mi_txt}");
    }

    #[test]
    fn split_sizes_and_determinism() {
        let config = CorpusConfig {
            num_cases: 100,
            seed: 5,
            ..tiny_config()
        };
        let (train, val, test) = split_corpus(generate(&config).unwrap());
        assert_eq!((train.len(), val.len(), test.len()), (70, 15, 15));
        let (train2, ..) = split_corpus(generate(&config).unwrap());
        assert_eq!(train, train2);
        // Single case lands in train.
        let one = CorpusConfig {
            num_cases: 1,
            ..tiny_config()
        };
        let (train, val, test) = split_corpus(generate(&one).unwrap());
        assert_eq!((train.len(), val.len(), test.len()), (1, 0, 0));
    }

    #[test]
    fn corpus_round_trip_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let mut config = tiny_config();
        config.noise_std = 0.05; // exercise full-precision floats
        let records = generate(&config).unwrap();
        save_corpus(&records, &path).unwrap();
        let loaded = load_corpus(&path).unwrap();
        assert_eq!(records, loaded);
    }

    #[test]
    fn load_errors_name_line_and_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let records = generate(&CorpusConfig {
            num_cases: 2,
            ..tiny_config()
        })
        .unwrap();
        save_corpus(&records, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();

        // Truncated second line.
        let mut lines: Vec<&str> = text.lines().collect();
        let truncated = &lines[1][..lines[1].len() / 2];
        let broken = format!("{}\n{truncated}\n", lines[0]);
        std::fs::write(&path, broken).unwrap();
        let err = load_corpus(&path).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");

        // Missing "label" field.
        let no_label = lines[0].replacen("\"label\":", "\"labelx\":", 1);
        std::fs::write(&path, format!("{no_label}\n")).unwrap();
        let err = load_corpus(&path).unwrap_err().to_string();
        assert!(err.contains("label"), "{err}");
        assert!(err.contains(":1:"), "{err}");

        // Unknown version.
        lines = text.lines().collect();
        let bad_v = lines[0].replacen("\"v\":1", "\"v\":9", 1);
        std::fs::write(&path, format!("{bad_v}\n")).unwrap();
        let err = load_corpus(&path).unwrap_err().to_string();
        assert!(err.contains("version 9"), "{err}");
    }
}

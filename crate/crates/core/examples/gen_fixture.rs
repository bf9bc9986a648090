//! Regenerates `fixtures/corpus.vert`, the synthetic test corpus.
//!
//! Ten decades (1900-1990), four genres, exactly 8000 tokens per decade with
//! genre shares drifting linearly (fic .55 -> .47, news .07 -> .14,
//! mag .23 -> .26, nf .15 -> .13). "in order that" counts are fixed per
//! genre so that the overall rate falls every decade, the share-extrapolated
//! rate rises in nf, falls in mag and news and wobbles in fic, while the
//! clause-initial and negated proportions stay flat.
//!
//! Usage: cargo run -p obsolens-core --example gen_fixture [OUT]

use std::fs::File;
use std::io::BufWriter;

use obsolens_core::corpus::{write_vertical, Document, Sentence};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

const DECADE_TOKENS: usize = 8000;
const GENRES: [&str; 4] = ["fic", "mag", "news", "nf"];

const IOT_FIC: [usize; 10] = [20, 20, 19, 19, 18, 17, 17, 16, 16, 15];
const IOT_MAG: [usize; 10] = [12, 11, 10, 9, 8, 7, 6, 5, 4, 3];
const IOT_NEWS: [usize; 10] = [6, 6, 5, 5, 4, 4, 3, 3, 2, 2];
const IOT_NF: [usize; 10] = [6; 10];
const IOT_INITIAL: [usize; 10] = [12, 11, 9, 10, 8, 8, 9, 9, 7, 6];
const IOT_NEGATED: [usize; 10] = [7, 6, 5, 6, 5, 5, 4, 4, 4, 5];

type Pair = (&'static str, &'static str);

const SUBJECTS: [Pair; 6] = [
    ("he", "pphs1"),
    ("she", "pphs1"),
    ("they", "pphs2"),
    ("we", "ppis2"),
    ("it", "pph1"),
    ("I", "ppis1"),
];
const MODALS: [Pair; 8] = [
    ("might", "vm"),
    ("could", "vm"),
    ("would", "vm"),
    ("should", "vm"),
    ("may", "vm"),
    ("can", "vm"),
    ("shall", "VM"),
    ("ought", "vmk"),
];
const BARE_VERBS: [Pair; 8] = [
    ("see", "vvi"),
    ("eat", "vvi"),
    ("rest", "vvi"),
    ("learn", "vvi"),
    ("return", "vvi"),
    ("listen", "vvi"),
    ("win", "vvi"),
    ("stay", "vvi"),
];
const PAST_VERBS: [Pair; 8] = [
    ("worked", "vvd"),
    ("waited", "vvd"),
    ("left", "vvd"),
    ("wrote", "vvd"),
    ("spoke", "vvd"),
    ("saved", "vvd"),
    ("moved", "vvd"),
    ("argued", "vvd"),
];
const DETS: [Pair; 4] = [("the", "at"), ("a", "at1"), ("every", "at1"), ("this", "dd1")];
const ADJS: [Pair; 6] = [
    ("old", "jj"),
    ("young", "jj"),
    ("quiet", "jj"),
    ("local", "jj"),
    ("new", "jj"),
    ("small", "jj"),
];
const NOUNS: [Pair; 12] = [
    ("man", "nn1"),
    ("woman", "nn1"),
    ("child", "nn1"),
    ("house", "nn1"),
    ("river", "nn1"),
    ("letter", "nn1"),
    ("committee", "nn1"),
    ("market", "nn1"),
    ("road", "nn1"),
    ("city", "nn1"),
    ("paper", "nn1"),
    ("family", "nn1"),
];
const ADVERBS: [Pair; 5] = [
    ("early", "rr"),
    ("quickly", "rr"),
    ("hard", "rr"),
    ("carefully", "rr"),
    ("loudly", "rr"),
];
const PREPS: [Pair; 4] = [("with", "iw"), ("at", "ii"), ("on", "ii"), ("from", "ii")];

struct Gen {
    rng: Xoshiro256PlusPlus,
}

impl Gen {
    fn pick(&mut self, set: &[Pair]) -> Pair {
        *set.choose(&mut self.rng).unwrap()
    }

    fn noun_phrase(&mut self, adj: bool) -> Vec<Pair> {
        let mut np = vec![self.pick(&DETS)];
        if adj {
            np.push(self.pick(&ADJS));
        }
        np.push(self.pick(&NOUNS));
        np
    }

    fn in_order_that(&mut self, initial: bool, negated: bool, quoted: bool) -> Vec<Pair> {
        let mut clause = vec![self.pick(&SUBJECTS), self.pick(&MODALS)];
        if negated {
            clause.push(if self.rng.random_bool(0.8) { ("not", "xx") } else { ("n't", "xx") });
        }
        clause.push(self.pick(&BARE_VERBS));
        let mut s = Vec::new();
        if initial {
            if quoted {
                s.push(("\"", "yquo"));
            }
            s.extend([("In", "ii"), ("order", "nn1"), ("that", "cst")]);
            s.extend(clause);
            s.push((",", "ycom"));
            s.push(self.pick(&SUBJECTS));
            s.push(self.pick(&PAST_VERBS));
            s.push(self.pick(&ADVERBS));
        } else {
            s.push(self.pick(&SUBJECTS));
            s.push(self.pick(&PAST_VERBS));
            s.push(self.pick(&ADVERBS));
            s.extend([("in", "ii"), ("order", "nn1"), ("that", "cst")]);
            s.extend(clause);
        }
        s.push((".", "ystp"));
        s
    }

    /// Purposive "so that" with `gap` tokens before the modal.
    fn so_that_modal(&mut self, gap: usize) -> Vec<Pair> {
        let mut s = vec![self.pick(&SUBJECTS), self.pick(&PAST_VERBS), self.pick(&ADVERBS)];
        s.extend([("so", "rr"), ("that", "cst")]);
        match gap {
            1 => s.push(self.pick(&SUBJECTS)),
            2 => s.extend(self.noun_phrase(false)),
            _ => s.extend(self.noun_phrase(true)),
        }
        s.push(self.pick(&MODALS));
        s.push(self.pick(&BARE_VERBS));
        s.push((".", "ystp"));
        s
    }

    fn so_that_result(&mut self) -> Vec<Pair> {
        let mut s = if self.rng.random_bool(0.5) {
            let mut s = vec![("So", "rr"), ("that", "cst")];
            s.extend(self.noun_phrase(true));
            s
        } else {
            let mut s = vec![("It", "pph1"), ("rained", "vvd"), ("so", "rr"), ("hard", "rr"), ("that", "cst")];
            s.extend(self.noun_phrase(false));
            s
        };
        s.push(self.pick(&PAST_VERBS));
        s.push((".", "ystp"));
        s
    }

    fn for_to(&mut self) -> Vec<Pair> {
        let mut s = vec![self.pick(&SUBJECTS), ("waited", "vvd"), ("for", "if")];
        s.push(self.pick(&[("him", "ppho1"), ("them", "ppho2"), ("us", "ppio2"), ("her", "ppho1")]));
        s.extend([("to", "to"), self.pick(&BARE_VERBS), (".", "ystp")]);
        s
    }

    fn in_order_for_to(&mut self) -> Vec<Pair> {
        let mut s = vec![self.pick(&SUBJECTS), self.pick(&PAST_VERBS), self.pick(&ADVERBS)];
        s.extend([("in", "ii"), ("order", "nn1"), ("for", "if")]);
        s.push(self.pick(&[("him", "ppho1"), ("them", "ppho2"), ("us", "ppio2"), ("her", "ppho1")]));
        s.extend([("to", "to"), self.pick(&BARE_VERBS), (".", "ystp")]);
        s
    }

    fn in_order_to(&mut self) -> Vec<Pair> {
        let mut s = vec![self.pick(&SUBJECTS), self.pick(&PAST_VERBS), ("in", "ii"), ("order", "nn1")];
        s.extend([("to", "to"), self.pick(&BARE_VERBS), (".", "ystp")]);
        s
    }

    /// "in order" closing one sentence and "that" opening the next.
    fn boundary_trap(&mut self) -> [Vec<Pair>; 2] {
        let first = vec![self.pick(&SUBJECTS), ("put", "vvd"), ("things", "nn2"), ("in", "ii"), ("order", "nn1")];
        let mut second = vec![("that", "dd1"), ("was", "vbdz")];
        second.extend(self.noun_phrase(false));
        second.push((".", "ystp"));
        [first, second]
    }

    fn filler(&mut self, len: usize) -> Vec<Pair> {
        let mut s = Vec::with_capacity(len);
        while s.len() + 1 < len {
            let remaining = len - 1 - s.len();
            let chunk: Vec<Pair> = match self.rng.random_range(0..5) {
                0 if remaining >= 3 => {
                    let adj = remaining >= 4 && self.rng.random_bool(0.5);
                    self.noun_phrase(adj)
                }
                1 if remaining >= 2 => vec![self.pick(&SUBJECTS), self.pick(&PAST_VERBS)],
                2 if remaining >= 3 => vec![self.pick(&PREPS), self.pick(&DETS), self.pick(&NOUNS)],
                3 if remaining >= 2 => vec![(",", "ycom"), self.pick(&ADVERBS)],
                _ => vec![self.pick(&NOUNS)],
            };
            s.extend(chunk);
        }
        s.truncate(len.saturating_sub(1));
        s.push((".", "ystp"));
        s
    }
}

fn genre_tokens(decade_ix: usize) -> [(usize, usize); 4] {
    let f = decade_ix as f64 / 9.0;
    let share = |a: f64, b: f64| a + (b - a) * f;
    let round = |s: f64| (s * DECADE_TOKENS as f64).round() as usize;
    let mag = round(share(0.23, 0.26));
    let news = round(share(0.07, 0.14));
    let nf = round(share(0.15, 0.13));
    let fic = DECADE_TOKENS - mag - news - nf;
    [(0, fic), (1, mag), (2, news), (3, nf)]
}

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "fixtures/corpus.vert".into());
    let mut g = Gen {
        rng: Xoshiro256PlusPlus::seed_from_u64(1900),
    };
    let mut docs = Vec::new();
    for d in 0..10 {
        let decade = 1900 + 10 * d as i32;
        let per_genre = [IOT_FIC[d], IOT_MAG[d], IOT_NEWS[d], IOT_NF[d]];
        let total: usize = per_genre.iter().sum();

        let mut initial = vec![false; total];
        let mut negated = vec![false; total];
        initial[..IOT_INITIAL[d]].fill(true);
        negated[..IOT_NEGATED[d]].fill(true);
        initial.shuffle(&mut g.rng);
        negated.shuffle(&mut g.rng);

        let mut k = 0;
        for (gi, budget) in genre_tokens(d) {
            let mut sentences: Vec<Vec<Pair>> = Vec::new();
            for _ in 0..per_genre[gi] {
                let quoted = g.rng.random_bool(0.2);
                sentences.push(g.in_order_that(initial[k], negated[k], quoted));
                k += 1;
            }
            for _ in 0..g.rng.random_range(1..=3) {
                sentences.push(g.so_that_modal(1));
            }
            for _ in 0..g.rng.random_range(0..=2) {
                sentences.push(g.so_that_modal(2));
            }
            for _ in 0..g.rng.random_range(0..=1) {
                sentences.push(g.so_that_modal(3));
            }
            for _ in 0..g.rng.random_range(1..=2) {
                sentences.push(g.so_that_result());
            }
            for _ in 0..g.rng.random_range(1..=3) {
                sentences.push(g.for_to());
            }
            for _ in 0..g.rng.random_range(0..=1) {
                sentences.push(g.in_order_for_to());
            }
            sentences.push(g.in_order_to());
            sentences.shuffle(&mut g.rng);
            let trap = (GENRES[gi] == "fic").then(|| g.boundary_trap());

            // Two documents per slice; constructions alternate between them.
            let budgets = [budget / 2, budget - budget / 2];
            let mut parts: [Vec<Vec<Pair>>; 2] = [Vec::new(), Vec::new()];
            for (i, s) in sentences.into_iter().enumerate() {
                parts[i % 2].push(s);
            }
            for (half, mut body) in parts.into_iter().enumerate() {
                let tail: Vec<Vec<Pair>> = match (&trap, half) {
                    (Some(t), 0) => t.to_vec(),
                    _ => Vec::new(),
                };
                let mut used: usize = body.iter().chain(&tail).map(Vec::len).sum();
                assert!(used <= budgets[half], "slice {decade}/{} over budget", GENRES[gi]);
                while used < budgets[half] {
                    let len = g.rng.random_range(6..=18).min(budgets[half] - used);
                    let s = g.filler(len);
                    used += s.len();
                    let at = g.rng.random_range(0..=body.len());
                    body.insert(at, s);
                }
                body.extend(tail);
                docs.push(Document {
                    doc_id: format!("{}_{}_{}", GENRES[gi], decade, half + 1),
                    year: decade + if half == 0 { 2 } else { 7 },
                    genre: GENRES[gi].to_string(),
                    sentences: body.iter().map(|s| Sentence::from_pairs(s)).collect(),
                });
            }
        }
    }
    let file = BufWriter::new(File::create(&out).expect("create output"));
    write_vertical(&docs, file).expect("write corpus");
    let tokens: usize = docs.iter().map(Document::token_count).sum();
    eprintln!("wrote {} documents, {tokens} tokens to {out}", docs.len());
}

//! Seeded generator of five-sentence stories whose gold temporal labels
//! follow from explicit connectives:
//!
//! * `A walked then B ran .` gives BEFORE(walked, ran)
//! * `A walked while B ran .` gives OVERLAP(walked, ran)
//! * `A slept during the storm .` gives IS_INCLUDED(slept, storm)
//! * a sentence opening with `Then` gives BEFORE(last event of the previous
//!   sentence, first event of this one)
//!
//! No other pair is annotated. Half of the annotations are stored in the
//! target-first direction with the inverse label.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Document, EventMention, LabelSchema, RelationAnnotation, Token};

pub const STORY_SENTENCES: usize = 5;

const NAMES: &[&str] = &[
    "Anna", "Ben", "Carla", "Dev", "Elena", "Farid", "Grace", "Hugo", "Ines", "Jonas", "Kira",
    "Liam", "Mona", "Nils", "Olga", "Pavel",
];
const VERBS: &[&str] = &[
    "walked", "ran", "laughed", "cooked", "slept", "danced", "called", "waited", "sang", "cried",
    "shouted", "smiled", "studied", "worked", "painted", "swam", "jumped", "wrote", "paid",
    "cleaned",
];
const OBJECTS: &[&str] = &["ball", "car", "letter", "cake", "door", "song", "book", "dog"];
const EVENT_NOUNS: &[&str] = &[
    "storm", "party", "game", "meeting", "concert", "trip", "lecture", "dinner",
];

#[derive(Clone, Copy)]
enum Template {
    Single,
    Then,
    While,
    During,
}

struct SentenceBuilder {
    tokens: Vec<(String, &'static str)>,
    /// Token positions of event anchors, in text order.
    events: Vec<usize>,
    /// Intra-sentence relations as (event slot, event slot, label name).
    relations: Vec<(usize, usize, &'static str)>,
}

impl SentenceBuilder {
    fn new() -> Self {
        SentenceBuilder {
            tokens: Vec::new(),
            events: Vec::new(),
            relations: Vec::new(),
        }
    }

    fn push(&mut self, surface: &str, pos: &'static str) {
        self.tokens.push((surface.to_string(), pos));
    }

    fn push_event(&mut self, surface: &str, pos: &'static str) -> usize {
        self.events.push(self.tokens.len());
        self.push(surface, pos);
        self.events.len() - 1
    }

    fn clause(&mut self, rng: &mut ChaCha8Rng, with_object: bool) -> usize {
        self.push(NAMES.choose(rng).unwrap(), "NNP");
        let ev = self.push_event(VERBS.choose(rng).unwrap(), "VBD");
        if with_object {
            self.push("the", "DT");
            self.push(OBJECTS.choose(rng).unwrap(), "NN");
        }
        ev
    }
}

fn build_sentence(rng: &mut ChaCha8Rng, opens_with_then: bool) -> SentenceBuilder {
    let mut s = SentenceBuilder::new();
    if opens_with_then {
        s.push("Then", "RB");
    }
    let template = match rng.gen_range(0..100) {
        0..=29 => Template::Single,
        30..=54 => Template::Then,
        55..=79 => Template::While,
        _ => Template::During,
    };
    match template {
        Template::Single => {
            let obj = rng.gen_bool(0.4);
            s.clause(rng, obj);
        }
        Template::Then | Template::While => {
            let obj = rng.gen_bool(0.3);
            let a = s.clause(rng, obj);
            let (cue, label) = match template {
                Template::Then => ("then", "BEFORE"),
                _ => ("while", "OVERLAP"),
            };
            s.push(cue, if cue == "then" { "RB" } else { "IN" });
            let b = s.clause(rng, false);
            s.relations.push((a, b, label));
        }
        Template::During => {
            let a = s.clause(rng, false);
            s.push("during", "IN");
            s.push("the", "DT");
            let b = s.push_event(EVENT_NOUNS.choose(rng).unwrap(), "NN");
            s.relations.push((a, b, "IS_INCLUDED"));
        }
    }
    s.push(".", ".");
    s
}

/// Generates `n_stories` documents named `story0000`, `story0001`, ...
pub fn generate_synthetic_corpus(n_stories: usize, seed: u64) -> Vec<Document> {
    let schema = LabelSchema::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_stories)
        .map(|i| generate_story(format!("story{i:04}"), &schema, &mut rng))
        .collect()
}

fn generate_story(doc_id: String, schema: &LabelSchema, rng: &mut ChaCha8Rng) -> Document {
    let mut sentences = Vec::with_capacity(STORY_SENTENCES);
    let mut events: Vec<EventMention> = Vec::new();
    let mut relations = Vec::new();
    let mut doc_tok_idx = 0;

    let mut annotate = |rng: &mut ChaCha8Rng, src: &str, tgt: &str, label: &str| {
        let label = schema.get(label).expect("default schema label");
        let ann = if rng.gen_bool(0.5) {
            RelationAnnotation {
                source: tgt.to_string(),
                target: src.to_string(),
                label: schema.inverse(label),
            }
        } else {
            RelationAnnotation {
                source: src.to_string(),
                target: tgt.to_string(),
                label,
            }
        };
        relations.push(ann);
    };

    for sent_idx in 0..STORY_SENTENCES {
        let opens_with_then = sent_idx > 0 && rng.gen_bool(0.35);
        let built = build_sentence(rng, opens_with_then);
        let first_event_id = events.len();

        let tokens: Vec<Token> = built
            .tokens
            .iter()
            .enumerate()
            .map(|(tok_idx, (surface, pos))| {
                let t = Token {
                    surface: surface.clone(),
                    pos: (*pos).to_string(),
                    sent_idx,
                    tok_idx,
                    doc_tok_idx,
                };
                doc_tok_idx += 1;
                t
            })
            .collect();

        for &pos in &built.events {
            events.push(EventMention {
                event_id: format!("e{}", events.len() + 1),
                sent_idx,
                first: pos,
                last: pos,
                head_tok: tokens[pos].doc_tok_idx,
            });
        }

        if opens_with_then {
            let prev = events[first_event_id - 1].event_id.clone();
            let cur = events[first_event_id].event_id.clone();
            annotate(rng, &prev, &cur, "BEFORE");
        }
        for &(a, b, label) in &built.relations {
            let src = events[first_event_id + a].event_id.clone();
            let tgt = events[first_event_id + b].event_id.clone();
            annotate(rng, &src, &tgt, label);
        }
        sentences.push(tokens);
    }

    Document {
        doc_id,
        sentences,
        events,
        relations,
    }
}

//! Corpus data model, JSONL ingestion, tokenization and context padding.
//!
//! A [`Corpus`] is a list of [`QAInstance`]s; each instance pairs a question
//! with its candidate windows. A [`CandidateWindow`] is the unit of scoring:
//! the candidate sentence plus the sentences immediately before and after it
//! in the source paragraph. Missing context sentences are replaced by a fixed
//! padding sentence (see [`pad_context`]).

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Literal text of a padding sentence.
pub const PAD_TEXT: &str = "<pad>";

/// Shipped stoplist; the version is part of the file name.
pub const STOPLIST_V1: &str = include_str!("../data/stopwords-en-v1.txt");

fn stoplist() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPLIST_V1
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

pub fn is_stopword(normalized: &str) -> bool {
    stoplist().contains(normalized)
}

/// ASCII punctuation plus the typographic marks that show up in web text.
pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}'
                | '\u{2019}'
                | '\u{201C}'
                | '\u{201D}'
                | '\u{2013}'
                | '\u{2014}'
                | '\u{2026}'
                | '\u{00AB}'
                | '\u{00BB}'
                | '\u{00BF}'
                | '\u{00A1}'
        )
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub normalized: String,
    /// False for stopwords and punctuation.
    pub is_content: bool,
}

impl Token {
    fn new(surface: &str) -> Self {
        let normalized = surface.to_lowercase();
        let is_content = !(is_stopword(&normalized) || normalized.chars().all(is_punctuation));
        Self {
            surface: surface.to_string(),
            normalized,
            is_content,
        }
    }

    fn padding() -> Self {
        Self {
            surface: PAD_TEXT.to_string(),
            normalized: PAD_TEXT.to_string(),
            is_content: false,
        }
    }
}

/// Lowercase, split on whitespace, and detach leading/trailing punctuation
/// characters into one token each.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<(usize, char)> = chunk.char_indices().collect();
        let mut lo = 0;
        while lo < chars.len() && is_punctuation(chars[lo].1) {
            lo += 1;
        }
        let mut hi = chars.len();
        while hi > lo && is_punctuation(chars[hi - 1].1) {
            hi -= 1;
        }
        let byte_at = |k: usize| chars.get(k).map_or(chunk.len(), |&(b, _)| b);
        for k in 0..lo {
            out.push(Token::new(&chunk[byte_at(k)..byte_at(k + 1)]));
        }
        if lo < hi {
            out.push(Token::new(&chunk[byte_at(lo)..byte_at(hi)]));
        }
        for k in hi..chars.len() {
            out.push(Token::new(&chunk[byte_at(k)..byte_at(k + 1)]));
        }
    }
    out
}

/// Position of a sentence within a window (or the question).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Question,
    Candidate,
    Prev,
    Next,
}

impl Role {
    /// One-byte code used in the embedding file format.
    pub fn code(self) -> u8 {
        match self {
            Role::Question => b'q',
            Role::Candidate => b'c',
            Role::Prev => b'p',
            Role::Next => b'n',
        }
    }

    pub fn from_code(b: u8) -> Option<Role> {
        match b {
            b'q' => Some(Role::Question),
            b'c' => Some(Role::Candidate),
            b'p' => Some(Role::Prev),
            b'n' => Some(Role::Next),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Question => "question",
            Role::Candidate => "cand",
            Role::Prev => "prev",
            Role::Next => "next",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Graph node order: candidate first, then previous, then next.
pub const NODE_ROLES: [Role; 3] = [Role::Candidate, Role::Prev, Role::Next];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub tokens: Vec<Token>,
    pub role: Role,
    pub is_padding: bool,
    /// Correct-answer flag; `None` means unknown.
    pub label: Option<bool>,
}

impl Sentence {
    pub fn new(text: impl Into<String>, role: Role, label: Option<bool>) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        Self {
            text,
            tokens,
            role,
            is_padding: false,
            label,
        }
    }

    pub fn padding(role: Role) -> Self {
        Self {
            text: PAD_TEXT.to_string(),
            tokens: vec![Token::padding()],
            role,
            is_padding: true,
            label: None,
        }
    }
}

/// Indices of the tokens that take part in alignment.
///
/// Content tokens in order; if filtering removes everything from a nonempty
/// sentence, all token indices. Padding sentences have none.
pub fn content_indices(s: &Sentence) -> Vec<usize> {
    if s.is_padding {
        return Vec::new();
    }
    let filtered: Vec<usize> = s
        .tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| t.is_content)
        .map(|(i, _)| i)
        .collect();
    if filtered.is_empty() {
        (0..s.tokens.len()).collect()
    } else {
        filtered
    }
}

pub fn content_tokens(s: &Sentence) -> Vec<Token> {
    content_indices(s)
        .into_iter()
        .map(|i| s.tokens[i].clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateWindow {
    pub id: String,
    pub cand: Sentence,
    pub prev: Option<Sentence>,
    pub next: Option<Sentence>,
}

impl CandidateWindow {
    pub fn new(
        id: impl Into<String>,
        cand: Sentence,
        prev: Option<Sentence>,
        next: Option<Sentence>,
    ) -> Result<Self> {
        let id = id.into();
        if cand.label.is_none() {
            return Err(Error::Config(format!("candidate {id:?} has no label")));
        }
        Ok(Self {
            id,
            cand,
            prev,
            next,
        })
    }

    /// Sentences in node order (cand, prev, next). Errors if a context slot is
    /// still empty.
    pub fn sentences(&self) -> Result<[&Sentence; 3]> {
        match (&self.prev, &self.next) {
            (Some(p), Some(n)) => Ok([&self.cand, p, n]),
            _ => Err(Error::UnpaddedWindow(self.id.clone())),
        }
    }

    /// Labels in node order; padding and unlabeled context are `None`.
    pub fn labels(&self) -> [Option<bool>; 3] {
        [
            self.cand.label,
            self.prev.as_ref().and_then(|s| s.label),
            self.next.as_ref().and_then(|s| s.label),
        ]
    }

    pub fn label(&self) -> bool {
        self.cand.label.unwrap_or(false)
    }
}

/// Replace any absent context sentence with the padding sentence. Idempotent.
pub fn pad_context(mut w: CandidateWindow) -> CandidateWindow {
    if w.prev.is_none() {
        w.prev = Some(Sentence::padding(Role::Prev));
    }
    if w.next.is_none() {
        w.next = Some(Sentence::padding(Role::Next));
    }
    w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAInstance {
    pub question_id: String,
    pub question: Sentence,
    pub windows: Vec<CandidateWindow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub split: Split,
    pub instances: Vec<QAInstance>,
}

impl Corpus {
    pub fn new(split: Split, instances: Vec<QAInstance>) -> Result<Self> {
        let mut seen = HashSet::new();
        for inst in &instances {
            if !seen.insert(inst.question_id.as_str()) {
                return Err(Error::DuplicateQuestion(inst.question_id.clone()));
            }
        }
        Ok(Self { split, instances })
    }

    pub fn num_windows(&self) -> usize {
        self.instances.iter().map(|i| i.windows.len()).sum()
    }

    /// Concatenate corpora (e.g. dev + test for reporting). Question ids must
    /// stay unique across the inputs.
    pub fn concat(split: Split, parts: Vec<Corpus>) -> Result<Corpus> {
        Corpus::new(split, parts.into_iter().flat_map(|c| c.instances).collect())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordJson {
    question_id: String,
    question: String,
    candidates: Vec<CandidateJson>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CandidateJson {
    id: String,
    text: String,
    label: u8,
    #[serde(default)]
    prev: Option<String>,
    #[serde(default)]
    prev_label: Option<u8>,
    #[serde(default)]
    next: Option<String>,
    #[serde(default)]
    next_label: Option<u8>,
}

fn flag(v: u8, line: usize, field: &str) -> Result<bool> {
    match v {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(Error::Record {
            line,
            message: format!("{field} must be 0 or 1, got {other}"),
        }),
    }
}

fn context(
    text: Option<String>,
    label: Option<u8>,
    role: Role,
    line: usize,
    field: &str,
) -> Result<Option<Sentence>> {
    match (text, label) {
        (Some(t), l) => {
            let label = l.map(|v| flag(v, line, field)).transpose()?;
            Ok(Some(Sentence::new(t, role, label)))
        }
        (None, None) => Ok(None),
        (None, Some(_)) => Err(Error::Record {
            line,
            message: format!("{field} given for a missing context sentence"),
        }),
    }
}

fn parse_record(raw: &str, line: usize) -> Result<QAInstance> {
    let rec: RecordJson = serde_json::from_str(raw).map_err(|e| Error::Record {
        line,
        message: e.to_string(),
    })?;
    if rec.candidates.is_empty() {
        return Err(Error::Record {
            line,
            message: format!("question {:?} has no candidates", rec.question_id),
        });
    }
    let mut ids = HashSet::new();
    let mut windows = Vec::with_capacity(rec.candidates.len());
    for c in rec.candidates {
        if !ids.insert(c.id.clone()) {
            return Err(Error::Record {
                line,
                message: format!("duplicate candidate id {:?}", c.id),
            });
        }
        let cand = Sentence::new(c.text, Role::Candidate, Some(flag(c.label, line, "label")?));
        let prev = context(c.prev, c.prev_label, Role::Prev, line, "prev_label")?;
        let next = context(c.next, c.next_label, Role::Next, line, "next_label")?;
        windows.push(pad_context(CandidateWindow::new(c.id, cand, prev, next)?));
    }
    Ok(QAInstance {
        question_id: rec.question_id,
        question: Sentence::new(rec.question, Role::Question, None),
        windows,
    })
}

/// Parse a JSONL corpus. Blank lines are skipped; line numbers are 1-based.
pub fn read_corpus(reader: impl BufRead, split: Split) -> Result<Corpus> {
    let mut instances = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Record {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let inst = parse_record(&line, lineno)?;
        if let Some(first) = seen.insert(inst.question_id.clone(), lineno) {
            return Err(Error::Record {
                line: lineno,
                message: format!(
                    "duplicate question_id {:?} (first seen on line {first})",
                    inst.question_id
                ),
            });
        }
        instances.push(inst);
    }
    Ok(Corpus { split, instances })
}

pub fn load_corpus(path: impl AsRef<Path>, split: Split) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file), split)
}

fn context_json(s: &Option<Sentence>) -> (Option<String>, Option<u8>) {
    match s {
        Some(s) if !s.is_padding => (Some(s.text.clone()), s.label.map(u8::from)),
        _ => (None, None),
    }
}

pub fn write_corpus(corpus: &Corpus, mut w: impl Write) -> Result<()> {
    for inst in &corpus.instances {
        let rec = RecordJson {
            question_id: inst.question_id.clone(),
            question: inst.question.text.clone(),
            candidates: inst
                .windows
                .iter()
                .map(|win| {
                    let (prev, prev_label) = context_json(&win.prev);
                    let (next, next_label) = context_json(&win.next);
                    CandidateJson {
                        id: win.id.clone(),
                        text: win.cand.text.clone(),
                        label: u8::from(win.label()),
                        prev,
                        prev_label,
                        next,
                        next_label,
                    }
                })
                .collect(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")
            .map_err(|e| Error::io("<corpus writer>", e))?;
    }
    Ok(())
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_corpus(corpus, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normalized(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(|t| t.normalized.as_str()).collect()
    }

    #[test]
    fn tokenize_question() {
        let toks = tokenize("What award?");
        assert_eq!(normalized(&toks), ["what", "award", "?"]);
        assert_eq!(
            toks.iter().map(|t| t.is_content).collect::<Vec<_>>(),
            [false, true, false]
        );
        assert_eq!(toks[0].surface, "What");
    }

    #[test]
    fn tokenize_empty() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \t\n").is_empty());
    }

    #[test]
    fn tokenize_detaches_punctuation() {
        let toks = tokenize("Lionel Messi, twice.");
        assert_eq!(normalized(&toks), ["lionel", "messi", ",", "twice", "."]);
        assert_eq!(
            toks.iter().map(|t| t.is_content).collect::<Vec<_>>(),
            [true, true, false, true, false]
        );
    }

    #[test]
    fn tokenize_keeps_inner_punctuation() {
        let toks = tokenize("(Men's \u{201C}best\u{201D}...)");
        assert_eq!(
            normalized(&toks),
            ["(", "men's", "\u{201C}", "best", "\u{201D}", ".", ".", ".", ")"]
        );
    }

    #[test]
    fn content_tokens_filters_stopwords() {
        let s = Sentence::new("Lionel Messi has been crowned", Role::Candidate, Some(true));
        assert_eq!(
            normalized(&content_tokens(&s)),
            ["lionel", "messi", "crowned"]
        );
    }

    #[test]
    fn content_tokens_falls_back_for_all_stopwords() {
        let s = Sentence::new("What is it?", Role::Question, None);
        assert_eq!(content_tokens(&s), s.tokens);
        let empty = Sentence::new("", Role::Question, None);
        assert!(content_tokens(&empty).is_empty());
    }

    #[test]
    fn padding_has_no_content() {
        let p = Sentence::padding(Role::Prev);
        assert_eq!(p.tokens.len(), 1);
        assert!(content_tokens(&p).is_empty());
        assert_eq!(p.label, None);
    }

    fn window(prev: bool, next: bool) -> CandidateWindow {
        CandidateWindow::new(
            "w",
            Sentence::new("a b", Role::Candidate, Some(true)),
            prev.then(|| Sentence::new("c", Role::Prev, None)),
            next.then(|| Sentence::new("d", Role::Next, Some(false))),
        )
        .unwrap()
    }

    #[test]
    fn pad_context_cases() {
        let w = pad_context(window(false, true));
        assert!(w.prev.as_ref().unwrap().is_padding);
        assert_eq!(w.prev.as_ref().unwrap().text, PAD_TEXT);
        assert!(!w.next.as_ref().unwrap().is_padding);

        let full = window(true, true);
        assert_eq!(pad_context(full.clone()), full);

        let both = pad_context(window(false, false));
        assert!(both.prev.unwrap().is_padding && both.next.unwrap().is_padding);
    }

    #[test]
    fn pad_context_idempotent() {
        let once = pad_context(window(false, false));
        assert_eq!(pad_context(once.clone()), once);
    }

    #[test]
    fn unpadded_window_rejected_by_sentences() {
        assert!(matches!(
            window(false, true).sentences(),
            Err(Error::UnpaddedWindow(_))
        ));
    }

    const FIXTURE: &str = concat!(
        r#"{"question_id":"q1","question":"What award did Messi win?","candidates":[{"id":"c1","text":"Messi won the award.","label":1,"prev":"Intro.","prev_label":0,"next":null,"next_label":null},{"id":"c2","text":"Other text.","label":0}]}"#,
        "\n\n",
        r#"{"question_id":"q2","question":"Who?","candidates":[{"id":"c1","text":"Him.","label":0,"prev":null,"next":"Yes.","next_label":1}]}"#,
        "\n"
    );

    #[test]
    fn reads_fixture() {
        let c = read_corpus(FIXTURE.as_bytes(), Split::Dev).unwrap();
        assert_eq!(c.split, Split::Dev);
        assert_eq!(c.instances.len(), 2);
        let w = &c.instances[0].windows[0];
        assert_eq!(w.labels(), [Some(true), Some(false), None]);
        assert!(w.next.as_ref().unwrap().is_padding);
        assert_eq!(
            c.instances[1].windows[0].labels(),
            [Some(false), None, Some(true)]
        );
    }

    #[test]
    fn missing_label_names_line() {
        let bad = concat!(
            r#"{"question_id":"q1","question":"x","candidates":[{"id":"c1","text":"y","label":1}]}"#,
            "\n",
            r#"{"question_id":"q2","question":"x","candidates":[{"id":"c1","text":"y"}]}"#
        );
        match read_corpus(bad.as_bytes(), Split::Train) {
            Err(Error::Record { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("label"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_question_rejected() {
        let line = r#"{"question_id":"q1","question":"x","candidates":[{"id":"c1","text":"y","label":1}]}"#;
        let bad = format!("{line}\n{line}\n");
        assert!(matches!(
            read_corpus(bad.as_bytes(), Split::Train),
            Err(Error::Record { line: 2, .. })
        ));
    }

    #[test]
    fn empty_file_keeps_split() {
        let c = read_corpus("".as_bytes(), Split::Test).unwrap();
        assert!(c.instances.is_empty());
        assert_eq!(c.split, Split::Test);
    }

    #[test]
    fn write_then_read_is_identity() {
        let c = read_corpus(FIXTURE.as_bytes(), Split::Train).unwrap();
        let mut buf = Vec::new();
        write_corpus(&c, &mut buf).unwrap();
        let back = read_corpus(buf.as_slice(), Split::Train).unwrap();
        assert_eq!(back, c);
    }
}

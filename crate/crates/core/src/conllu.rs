//! Reading and writing CoNLL-U dependency treebanks.
//!
//! Only the syntactic words of a sentence are kept: multiword-token range
//! lines (`3-4`) and empty nodes (`5.1`) are skipped, so token indices stay
//! the 1-based surface positions used by the HEAD column. `_` in any text
//! column is read as the empty string and written back as `_`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use thiserror::Error;

/// Morphological feature bundle (the FEATS column), kept in canonical
/// lexicographic order of feature names.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Features(BTreeMap<String, String>);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeaturesError {
    #[error("feature pair `{0}` has no `=`")]
    MissingEquals(String),
    #[error("feature `{0}` occurs more than once")]
    Duplicate(String),
    #[error("empty feature name or value in `{0}`")]
    Empty(String),
}

impl Features {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }

    pub fn insert(&mut self, name: impl Into<String>, value: impl Into<String>) -> Option<String> {
        self.0.insert(name.into(), value.into())
    }

    pub fn remove(&mut self, name: &str) -> Option<String> {
        self.0.remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Copy of the bundle with one feature removed.
    pub fn without(&self, name: &str) -> Features {
        let mut f = self.clone();
        f.remove(name);
        f
    }
}

impl FromStr for Features {
    type Err = FeaturesError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_feats(s)
    }
}

impl fmt::Display for Features {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("_");
        }
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            write!(f, "{}={}", k, v)?;
        }
        Ok(())
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for Features {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        Features(iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }
}

/// Parses a FEATS column value: `_` or `Name=Value` pairs joined by `|`.
pub fn parse_feats(text: &str) -> Result<Features, FeaturesError> {
    let text = text.trim();
    let mut feats = BTreeMap::new();
    if text == "_" || text.is_empty() {
        return Ok(Features(feats));
    }
    for pair in text.split('|') {
        let (name, value) = pair.split_once('=').ok_or_else(|| FeaturesError::MissingEquals(pair.to_owned()))?;
        if name.is_empty() || value.is_empty() {
            return Err(FeaturesError::Empty(pair.to_owned()));
        }
        if feats.insert(name.to_owned(), value.to_owned()).is_some() {
            return Err(FeaturesError::Duplicate(name.to_owned()));
        }
    }
    Ok(Features(feats))
}

/// One syntactic word.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Token {
    /// 1-based surface position.
    pub id: usize,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    pub xpos: String,
    pub feats: Features,
    /// Index of the governing token, 0 for the root.
    pub head: usize,
    pub deprel: String,
    pub deps: String,
    pub misc: String,
}

impl Token {
    pub fn new(id: usize, form: &str, lemma: &str, upos: &str, feats: Features, head: usize, deprel: &str) -> Self {
        Token {
            id,
            form: form.to_owned(),
            lemma: lemma.to_owned(),
            upos: upos.to_owned(),
            feats,
            head,
            deprel: deprel.to_owned(),
            ..Token::default()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Sentence {
    pub sent_id: String,
    /// Comment lines other than `sent_id`, without the leading `#`.
    pub comments: Vec<String>,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token at a 1-based index.
    pub fn token(&self, index: usize) -> Option<&Token> {
        index.checked_sub(1).and_then(|i| self.tokens.get(i))
    }

    /// Checks the tree invariants: contiguous indices, heads in range and
    /// no cycles. Errors carry the 0-based position of the offending token.
    pub fn validate(&self) -> Result<(), TreeError> {
        let n = self.tokens.len();
        for (i, t) in self.tokens.iter().enumerate() {
            if t.id != i + 1 {
                return Err(TreeError::NonContiguous { position: i, expected: i + 1, found: t.id });
            }
            if t.head > n {
                return Err(TreeError::HeadOutOfRange { position: i, head: t.head, len: n });
            }
            if t.head == t.id {
                return Err(TreeError::SelfLoop { position: i });
            }
        }
        // Walk each chain towards the root; a chain longer than n revisits a node.
        for (i, t) in self.tokens.iter().enumerate() {
            let mut cur = t.head;
            let mut steps = 0;
            while cur != 0 {
                steps += 1;
                if steps > n {
                    return Err(TreeError::Cycle { position: i });
                }
                cur = self.tokens[cur - 1].head;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("token at position {position} has id {found}, expected {expected}")]
    NonContiguous { position: usize, expected: usize, found: usize },
    #[error("head {head} out of range for sentence of length {len}")]
    HeadOutOfRange { position: usize, head: usize, len: usize },
    #[error("token is its own head")]
    SelfLoop { position: usize },
    #[error("cyclic head chain")]
    Cycle { position: usize },
}

impl TreeError {
    fn position(&self) -> usize {
        match *self {
            TreeError::NonContiguous { position, .. }
            | TreeError::HeadOutOfRange { position, .. }
            | TreeError::SelfLoop { position }
            | TreeError::Cycle { position } => position,
        }
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: expected 10 tab-separated columns, found {found}")]
    Columns { line: usize, found: usize },
    #[error("line {line}: invalid token id `{value}`")]
    Id { line: usize, value: String },
    #[error("line {line}: non-integer head `{value}`")]
    Head { line: usize, value: String },
    #[error("line {line}: {source}")]
    Features { line: usize, source: FeaturesError },
    #[error("line {line}: {source}")]
    Tree { line: usize, source: TreeError },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ParseError {
    pub fn line(&self) -> Option<usize> {
        match *self {
            ParseError::Columns { line, .. }
            | ParseError::Id { line, .. }
            | ParseError::Head { line, .. }
            | ParseError::Features { line, .. }
            | ParseError::Tree { line, .. } => Some(line),
            ParseError::Io(_) => None,
        }
    }
}

fn column(s: &str) -> String {
    if s == "_" {
        String::new()
    } else {
        s.to_owned()
    }
}

fn parse_token_line(line: &str, lineno: usize) -> Result<Option<(Token, usize)>, ParseError> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 10 {
        return Err(ParseError::Columns { line: lineno, found: cols.len() });
    }
    let id = cols[0];
    if id.contains('-') || id.contains('.') {
        return Ok(None);
    }
    let id: usize = match id.parse() {
        Ok(v) if v > 0 => v,
        _ => return Err(ParseError::Id { line: lineno, value: id.to_owned() }),
    };
    let head: usize = cols[6].parse().map_err(|_| ParseError::Head { line: lineno, value: cols[6].to_owned() })?;
    let feats = parse_feats(cols[5]).map_err(|source| ParseError::Features { line: lineno, source })?;
    Ok(Some((
        Token {
            id,
            form: column(cols[1]),
            lemma: column(cols[2]),
            upos: column(cols[3]),
            xpos: column(cols[4]),
            feats,
            head,
            deprel: column(cols[7]),
            deps: column(cols[8]),
            misc: column(cols[9]),
        },
        lineno,
    )))
}

/// Parses one blank-line-delimited block. `lines` carries 1-based line numbers.
fn parse_block(lines: &[(usize, String)], ordinal: usize) -> Result<Option<Sentence>, ParseError> {
    let mut sentence = Sentence::default();
    let mut token_lines = Vec::new();
    let mut sent_id = None;
    for (lineno, line) in lines {
        if let Some(comment) = line.strip_prefix('#') {
            match comment.trim().strip_prefix("sent_id") {
                Some(rest) if rest.trim_start().starts_with('=') => {
                    sent_id = Some(rest.trim_start()[1..].trim().to_owned());
                }
                _ => sentence.comments.push(comment.to_owned()),
            }
            continue;
        }
        if let Some((token, l)) = parse_token_line(line, *lineno)? {
            sentence.tokens.push(token);
            token_lines.push(l);
        }
    }
    if sentence.tokens.is_empty() && sent_id.is_none() && sentence.comments.is_empty() {
        return Ok(None);
    }
    sentence.sent_id = sent_id.unwrap_or_else(|| ordinal.to_string());
    if let Err(source) = sentence.validate() {
        let line = token_lines.get(source.position()).copied().unwrap_or(lines[0].0);
        return Err(ParseError::Tree { line, source });
    }
    Ok(Some(sentence))
}

/// Splits input into blocks, parses each, and hands results to `sink`.
fn for_each_block<R: BufRead>(
    reader: R,
    mut sink: impl FnMut(Result<Option<Sentence>, ParseError>) -> Result<(), ParseError>,
) -> Result<(), ParseError> {
    let mut block: Vec<(usize, String)> = Vec::new();
    let mut ordinal = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            if !block.is_empty() {
                ordinal += 1;
                sink(parse_block(&block, ordinal))?;
                block.clear();
            }
        } else {
            block.push((i + 1, line.to_owned()));
        }
    }
    if !block.is_empty() {
        ordinal += 1;
        sink(parse_block(&block, ordinal))?;
    }
    Ok(())
}

/// Strict reader: the first malformed line or tree violation is an error.
pub fn read_conllu<R: BufRead>(reader: R) -> Result<Vec<Sentence>, ParseError> {
    let mut out = Vec::new();
    for_each_block(reader, |res| {
        if let Some(s) = res? {
            out.push(s);
        }
        Ok(())
    })?;
    Ok(out)
}

pub fn parse_conllu(text: &str) -> Result<Vec<Sentence>, ParseError> {
    read_conllu(text.as_bytes())
}

/// Result of a lenient read: well-formed sentences plus the errors of the
/// sentences that were skipped.
#[derive(Debug, Default)]
pub struct LenientRead {
    pub sentences: Vec<Sentence>,
    pub skipped: Vec<ParseError>,
}

/// Lenient reader: a sentence with a malformed line or a broken tree is
/// skipped and its error collected. I/O errors are still fatal.
pub fn read_conllu_lenient<R: BufRead>(reader: R) -> Result<LenientRead, io::Error> {
    let mut out = LenientRead::default();
    let res = for_each_block(reader, |res| {
        match res {
            Ok(Some(s)) => out.sentences.push(s),
            Ok(None) => {}
            Err(ParseError::Io(e)) => return Err(ParseError::Io(e)),
            Err(e) => {
                log::warn!("skipping sentence: {}", e);
                out.skipped.push(e);
            }
        }
        Ok(())
    });
    match res {
        Err(ParseError::Io(e)) => Err(e),
        _ => Ok(out),
    }
}

fn text_or_underscore(s: &str) -> &str {
    if s.is_empty() {
        "_"
    } else {
        s
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# sent_id = {}", self.sent_id)?;
        for c in &self.comments {
            writeln!(f, "#{}", c)?;
        }
        for t in &self.tokens {
            writeln!(
                f,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                t.id,
                text_or_underscore(&t.form),
                text_or_underscore(&t.lemma),
                text_or_underscore(&t.upos),
                text_or_underscore(&t.xpos),
                t.feats,
                t.head,
                text_or_underscore(&t.deprel),
                text_or_underscore(&t.deps),
                text_or_underscore(&t.misc),
            )?;
        }
        Ok(())
    }
}

pub fn write_conllu<W: Write>(mut w: W, sentences: &[Sentence]) -> io::Result<()> {
    for s in sentences {
        write!(w, "{}", s)?;
        writeln!(w)?;
    }
    Ok(())
}

/// English UD marks only third-person singular present verbs for Number.
/// Adds `Number=Plur` to every other finite present VERB/AUX. Returns the
/// number of tokens changed; running it twice changes nothing the second time.
pub fn enrich_english_verb_number(sentence: &mut Sentence) -> usize {
    let mut changed = 0;
    for t in &mut sentence.tokens {
        if (t.upos == "VERB" || t.upos == "AUX")
            && t.feats.get("VerbForm") == Some("Fin")
            && t.feats.get("Tense") == Some("Pres")
            && !t.feats.contains("Number")
        {
            t.feats.insert("Number", "Plur");
            changed += 1;
        }
    }
    changed
}

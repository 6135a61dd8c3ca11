use std::fs;
use std::path::Path;

use crate::datamodel::RequestKind;
use crate::error::{Error, Result};
use crate::scorer::{RequestBody, ScoreRequest, label_names};

pub const DEFAULT_MAX_DOC_CHARS: usize = 4000;
pub const TRUNCATION_MARKER: &str = " [...]";

const DEFAULT_POINTWISE: &str = "Passage: {doc}\nQuery: {query}\n\
Does the passage answer the query? Answer 'Yes' or 'No'.";

const DEFAULT_TRIPLET: &str = "Given a query \"{query}\", which of the following two passages \
is more relevant to the query?\n\nPassage A: \"{doc}\"\n\nPassage B: \"{ref}\"\n\n\
Output Passage A or Passage B:";

const DEFAULT_DUEL: &str = "Given a query \"{query}\", which of the following two passages \
is more relevant to the query?\n\nPassage A: \"{doc_i}\"\n\nPassage B: \"{doc_j}\"\n\n\
Output Passage A or Passage B:";

const DEFAULT_SETWISE: &str = "Given a query \"{query}\", which of the following passages \
is the most relevant one to the query?\n\n{docs}\n\n\
Output only the passage label of the most relevant passage:";

/// One prompt template per request kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub pointwise: String,
    pub triplet: String,
    pub duel: String,
    pub setwise: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            pointwise: DEFAULT_POINTWISE.to_string(),
            triplet: DEFAULT_TRIPLET.to_string(),
            duel: DEFAULT_DUEL.to_string(),
            setwise: DEFAULT_SETWISE.to_string(),
        }
    }
}

fn required_placeholders(kind: RequestKind) -> &'static [&'static str] {
    match kind {
        RequestKind::Pointwise => &["query", "doc"],
        RequestKind::Triplet => &["query", "doc", "ref"],
        RequestKind::Duel => &["query", "doc_i", "doc_j"],
        RequestKind::Setwise => &["query", "docs"],
    }
}

fn file_name(kind: RequestKind) -> String {
    format!("{}.txt", kind.as_str())
}

impl PromptTemplates {
    /// Loads `pointwise.txt`, `triplet.txt`, `duel.txt` and `setwise.txt` from `dir`.
    /// Missing files fall back to the built-in defaults.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut templates = PromptTemplates::default();
        for kind in RequestKind::ALL {
            let path = dir.join(file_name(kind));
            match fs::read_to_string(&path) {
                Ok(text) => *templates.get_mut(kind) = text.trim_end_matches('\n').to_string(),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(Error::io(path, e)),
            }
        }
        templates.validate()?;
        Ok(templates)
    }

    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for kind in RequestKind::ALL {
            let path = dir.join(file_name(kind));
            fs::write(&path, format!("{}\n", self.get(kind))).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    pub fn get(&self, kind: RequestKind) -> &str {
        match kind {
            RequestKind::Pointwise => &self.pointwise,
            RequestKind::Triplet => &self.triplet,
            RequestKind::Duel => &self.duel,
            RequestKind::Setwise => &self.setwise,
        }
    }

    fn get_mut(&mut self, kind: RequestKind) -> &mut String {
        match kind {
            RequestKind::Pointwise => &mut self.pointwise,
            RequestKind::Triplet => &mut self.triplet,
            RequestKind::Duel => &mut self.duel,
            RequestKind::Setwise => &mut self.setwise,
        }
    }

    /// Every template must mention each placeholder its kind fills, and nothing else.
    pub fn validate(&self) -> Result<()> {
        for kind in RequestKind::ALL {
            check_template(kind, self.get(kind))?;
        }
        Ok(())
    }
}

enum Segment<'t> {
    Literal(&'t str),
    Placeholder(&'t str),
}

/// Splits a template into literals and `{identifier}` placeholders.
/// Braces that do not enclose an identifier are kept as literal text.
fn segments(template: &str) -> Vec<Segment<'_>> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let close = after.find('}');
        let name = close.map(|c| &after[..c]);
        match name {
            Some(name)
                if !name.is_empty()
                    && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') =>
            {
                out.push(Segment::Literal(&rest[..open]));
                out.push(Segment::Placeholder(name));
                rest = &after[name.len() + 1..];
            }
            _ => {
                out.push(Segment::Literal(&rest[..=open]));
                rest = after;
            }
        }
    }
    out.push(Segment::Literal(rest));
    out
}

fn check_template(kind: RequestKind, template: &str) -> Result<()> {
    let required = required_placeholders(kind);
    let present: Vec<&str> = segments(template)
        .into_iter()
        .filter_map(|s| match s {
            Segment::Placeholder(p) => Some(p),
            Segment::Literal(_) => None,
        })
        .collect();
    if let Some(unknown) = present.iter().find(|p| !required.contains(p)) {
        return Err(Error::Template(format!("{{{unknown}}}")));
    }
    if let Some(missing) = required.iter().find(|r| !present.contains(r)) {
        return Err(Error::Template(format!("{{{missing}}}")));
    }
    Ok(())
}

fn truncate(text: &str, max_chars: usize) -> String {
    match text.char_indices().nth(max_chars) {
        Some((cut, _)) => format!("{}{}", &text[..cut], TRUNCATION_MARKER),
        None => text.to_string(),
    }
}

/// Substitutes the request's texts into its kind's template.
///
/// Document texts are cut to `max_doc_chars` characters and suffixed with
/// [`TRUNCATION_MARKER`]. Substitution is single-pass, so braces inside
/// document text are never re-expanded.
pub fn build_prompt(
    request: &ScoreRequest<'_>,
    templates: &PromptTemplates,
    max_doc_chars: usize,
) -> Result<String> {
    let kind = request.kind();
    let template = templates.get(kind);
    check_template(kind, template)?;

    let cut = |t: &str| truncate(t, max_doc_chars);
    let lookup = |name: &str| -> String {
        match (&request.body, name) {
            (_, "query") => request.query().text.clone(),
            (RequestBody::Pointwise { doc, .. }, "doc") => cut(&doc.text),
            (RequestBody::Triplet { doc, .. }, "doc") => cut(&doc.text),
            (RequestBody::Triplet { reference, .. }, "ref") => cut(&reference.text),
            (RequestBody::Duel { doc_a, .. }, "doc_i") => cut(&doc_a.text),
            (RequestBody::Duel { doc_b, .. }, "doc_j") => cut(&doc_b.text),
            (RequestBody::Setwise { docs, .. }, "docs") => {
                let labels = label_names(RequestKind::Setwise, docs.len());
                docs.iter()
                    .zip(labels)
                    .map(|(d, label)| format!("Passage {label}: \"{}\"", cut(&d.text)))
                    .collect::<Vec<_>>()
                    .join("\n\n")
            }
            _ => unreachable!("placeholders checked against the kind"),
        }
    };

    let mut prompt = String::with_capacity(template.len() + 256);
    for segment in segments(template) {
        match segment {
            Segment::Literal(text) => prompt.push_str(text),
            Segment::Placeholder(name) => prompt.push_str(&lookup(name)),
        }
    }
    Ok(prompt)
}

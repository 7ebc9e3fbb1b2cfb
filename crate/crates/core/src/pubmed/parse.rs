//! Parsers for elink (reference list) and efetch (abstract) XML payloads.

use quick_xml::events::Event;
use quick_xml::Reader;

use super::{FetchError, Pmid};

const REFS_LINKNAME: &str = "pubmed_pubmed_refs";

fn xml_err(e: impl std::fmt::Display) -> FetchError {
    FetchError::Parse(e.to_string())
}

/// Walks every event of a document, keeping the open-element stack, and
/// rejects documents that end before their root closes.
fn walk<F>(payload: &[u8], mut on_event: F) -> Result<String, FetchError>
where
    F: FnMut(&[String], Event<'_>) -> Result<(), FetchError>,
{
    let mut reader = Reader::from_reader(payload);
    let mut buf = Vec::new();
    let mut stack: Vec<String> = Vec::new();
    let mut root: Option<String> = None;
    loop {
        let event = reader.read_event_into(&mut buf).map_err(xml_err)?;
        match event {
            Event::Start(ref e) => {
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                if stack.is_empty() {
                    if root.is_some() {
                        return Err(FetchError::Parse("multiple root elements".into()));
                    }
                    root = Some(name.clone());
                }
                stack.push(name);
                on_event(&stack, event)?;
            }
            Event::End(_) => {
                on_event(&stack, event)?;
                stack.pop();
            }
            Event::Empty(ref e) => {
                if stack.is_empty() && root.is_none() {
                    root = Some(String::from_utf8_lossy(e.name().as_ref()).into_owned());
                }
                on_event(&stack, event)?;
            }
            Event::Eof => break,
            other => on_event(&stack, other)?,
        }
        buf.clear();
    }
    if !stack.is_empty() {
        return Err(FetchError::Parse(format!(
            "unexpected end of document inside <{}>",
            stack.last().unwrap()
        )));
    }
    root.ok_or_else(|| FetchError::Parse("empty document".into()))
}

fn text_of(event: &Event<'_>) -> Result<Option<String>, FetchError> {
    match event {
        Event::Text(t) => Ok(Some(t.unescape().map_err(xml_err)?.into_owned())),
        Event::CData(c) => Ok(Some(String::from_utf8_lossy(c.as_ref()).into_owned())),
        _ => Ok(None),
    }
}

fn ends_with(stack: &[String], tail: &[&str]) -> bool {
    stack.len() >= tail.len()
        && stack[stack.len() - tail.len()..]
            .iter()
            .zip(tail)
            .all(|(a, b)| a == b)
}

/// Reference PMIDs from an elink `pubmed_pubmed_refs` response, in document
/// order, first occurrence kept.
pub fn parse_cited_pmids(pmid: Pmid, payload: &[u8]) -> Result<Vec<Pmid>, FetchError> {
    let mut out: Vec<Pmid> = Vec::new();
    let mut current_db: Vec<Pmid> = Vec::new();
    let mut current_linkname: Option<String> = None;
    let mut text = String::new();
    let mut error_seen = false;

    let root = walk(payload, |stack, event| {
        match &event {
            Event::Start(_) => {
                text.clear();
                if stack.last().map(String::as_str) == Some("LinkSetDb") {
                    current_db.clear();
                    current_linkname = None;
                }
            }
            Event::End(_) => {
                let name = stack.last().map(String::as_str).unwrap_or("");
                if ends_with(stack, &["LinkSetDb", "Link", "Id"]) {
                    let id: Pmid = text
                        .trim()
                        .parse()
                        .map_err(|_| FetchError::Parse(format!("bad link id {:?}", text.trim())))?;
                    current_db.push(id);
                } else if ends_with(stack, &["LinkSetDb", "LinkName"]) {
                    current_linkname = Some(text.trim().to_string());
                } else if name == "LinkSetDb" {
                    let wanted = current_linkname
                        .as_deref()
                        .is_none_or(|n| n == REFS_LINKNAME);
                    if wanted {
                        for id in current_db.drain(..) {
                            if !out.contains(&id) {
                                out.push(id);
                            }
                        }
                    }
                } else if name == "ERROR" {
                    error_seen = true;
                }
                text.clear();
            }
            ev => {
                if let Some(t) = text_of(ev)? {
                    text.push_str(&t);
                }
            }
        }
        Ok(())
    })?;

    if root != "eLinkResult" {
        return Err(FetchError::Parse(format!(
            "expected <eLinkResult> root, found <{root}>"
        )));
    }
    if error_seen && out.is_empty() {
        return Err(FetchError::NotFound(pmid));
    }
    Ok(out)
}

/// Plain-text abstract from an efetch PubMed XML response.
///
/// All `AbstractText` sections of the first article are joined in document
/// order with single spaces; inline markup is dropped but its text kept,
/// whitespace runs collapse to one space, Unicode is left alone.
pub fn parse_abstract(pmid: Pmid, payload: &[u8]) -> Result<String, FetchError> {
    let mut articles = 0usize;
    let mut sections: Vec<String> = Vec::new();
    let mut in_section = false;
    let mut section = String::new();

    let root = walk(payload, |stack, event| {
        match &event {
            Event::Start(_) => {
                let name = stack.last().map(String::as_str).unwrap_or("");
                if name == "PubmedArticle" || name == "PubmedBookArticle" {
                    articles += 1;
                }
                if articles == 1
                    && name == "AbstractText"
                    && stack.iter().any(|s| s == "Abstract")
                    && !stack.iter().any(|s| s == "OtherAbstract")
                {
                    in_section = true;
                    section.clear();
                }
            }
            Event::End(_) => {
                if in_section && stack.last().map(String::as_str) == Some("AbstractText") {
                    in_section = false;
                    sections.push(std::mem::take(&mut section));
                }
            }
            ev => {
                if in_section {
                    if let Some(t) = text_of(ev)? {
                        section.push_str(&t);
                    }
                }
            }
        }
        Ok(())
    })?;

    if root != "PubmedArticleSet" {
        return Err(FetchError::Parse(format!(
            "expected <PubmedArticleSet> root, found <{root}>"
        )));
    }
    if articles == 0 {
        return Err(FetchError::NotFound(pmid));
    }
    let joined = sections.join(" ");
    let text = normalize_whitespace(&joined);
    if text.is_empty() {
        return Err(FetchError::AbstractMissing(pmid));
    }
    Ok(text)
}

pub(crate) fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

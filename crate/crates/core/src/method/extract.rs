use super::MethodError;

struct Fence<'a> {
    tag: &'a str,
    body: &'a str,
}

/// All fenced blocks in order. An unterminated fence runs to the end of the
/// text, which is what a completion cut off by the token limit looks like.
fn fences(text: &str) -> Vec<Fence<'_>> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let (tag, body_start) = match after.find('\n') {
            Some(nl) => (after[..nl].trim(), &after[nl + 1..]),
            None => (after.trim(), ""),
        };
        match body_start.find("```") {
            Some(close) => {
                out.push(Fence {
                    tag,
                    body: &body_start[..close],
                });
                rest = &body_start[close + 3..];
            }
            None => {
                out.push(Fence {
                    tag,
                    body: body_start,
                });
                break;
            }
        }
    }
    out
}

fn find_ci(haystack: &str, needle: &str) -> Option<usize> {
    haystack.to_ascii_lowercase().find(&needle.to_ascii_lowercase())
}

/// Pull the HTML out of a completion: the first ```html block, else the
/// first fenced block, else everything from the first `<!DOCTYPE` or
/// `<html`, else the whole text. The result is trimmed and must not be
/// empty.
pub fn extract_html(completion: &str) -> Result<String, MethodError> {
    let blocks = fences(completion);
    let picked = blocks
        .iter()
        .find(|f| f.tag.eq_ignore_ascii_case("html"))
        .or_else(|| blocks.first())
        .map(|f| f.body)
        .unwrap_or_else(|| {
            let start = [find_ci(completion, "<!DOCTYPE"), find_ci(completion, "<html")]
                .into_iter()
                .flatten()
                .min();
            match start {
                Some(i) => &completion[i..],
                None => completion,
            }
        });
    let html = picked.trim();
    if html.is_empty() {
        return Err(MethodError::EmptyGeneration {
            stage: "extract".into(),
        });
    }
    Ok(html.to_string())
}

//! Reply grammar for model agents.
//!
//! Reasoning sections (`<think>…</think>`, `<reasoning>…</reasoning>`) are
//! removed first; an unclosed section runs to the end of the reply. The
//! answer is then the first sign-axis token in the remaining text: `+` or `-`
//! (also U+2212 and U+2013), not preceded by a letter or digit, followed by
//! `x`, `y` or `z` in either case, not followed by a letter or digit.

use crate::geometry::{Action, Axis};

const REASONING_TAGS: [&str; 2] = ["think", "reasoning"];

fn strip_reasoning(reply: &str) -> String {
    let mut text = reply.to_string();
    for tag in REASONING_TAGS {
        let open = format!("<{tag}>");
        let close = format!("</{tag}>");
        loop {
            let lower = text.to_ascii_lowercase();
            let Some(start) = lower.find(&open) else {
                break;
            };
            let end = lower[start..]
                .find(&close)
                .map(|i| start + i + close.len())
                .unwrap_or(text.len());
            text.replace_range(start..end, " ");
        }
    }
    text
}

/// Returns the first action token in `reply`, or `None` if there is none.
pub fn parse_action(reply: &str) -> Option<Action> {
    let text = strip_reasoning(reply);
    let chars: Vec<char> = text.chars().collect();
    for i in 0..chars.len() {
        let positive = match chars[i] {
            '+' => true,
            '-' | '\u{2212}' | '\u{2013}' => false,
            _ => continue,
        };
        if i > 0 && chars[i - 1].is_alphanumeric() {
            continue;
        }
        let axis = match chars.get(i + 1).map(|c| c.to_ascii_lowercase()) {
            Some('x') => Axis::X,
            Some('y') => Axis::Y,
            Some('z') => Axis::Z,
            _ => continue,
        };
        if chars.get(i + 2).is_some_and(|c| c.is_alphanumeric()) {
            continue;
        }
        return Some(Action::along(axis, positive));
    }
    None
}

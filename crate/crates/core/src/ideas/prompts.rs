//! Versioned prompt templates for the idea pipeline. The template id is
//! embedded in the prompt text so logs and the offline stub can tell the
//! two stages apart.

use sha2::{Digest, Sha256};

pub const EXTRACTION_TEMPLATE_ID: &str = "idea-extraction/v1";
pub const CATEGORY_TEMPLATE_ID: &str = "category-induction/v1";

pub const EXTRACTION_TEMPLATE: &str = "[template: idea-extraction/v1]
You are an annotator. The transcript below contains only the participant's own messages from a
brainstorming session about the task in the conversation state.

List every distinct idea the participant proposed. Ignore questions, acknowledgements and ideas
that came only from the assistant. Answer with a JSON array and nothing else. Each element must be
an object with exactly these fields:
  \"idea_id\": a short id unique within this answer, e.g. \"I1\"
  \"title\": at most eight words naming the idea
  \"description\": one or two sentences describing it
  \"evidence_quotes\": a non-empty array of verbatim quotes from the participant's messages
Copy quotes exactly, character for character. Answer [] if there are no ideas.";

pub const CATEGORY_TEMPLATE: &str = "[template: category-induction/v1]
The first message is a JSON array of ideas from one participant. Group them into at most 8
thematic categories. Answer with a JSON array and nothing else. Each element must be an object
with exactly these fields:
  \"label\": a short category name
  \"idea_ids\": the ids of the ideas in the category
Every idea id must appear in exactly one category.";

pub const REFORMAT_INSTRUCTION: &str = "That answer was not valid. Reply again with only the JSON array in the \
required format, no prose and no code fences.";

/// Hex SHA-256 over every template, recorded in reports.
pub fn prompt_hash() -> String {
    let mut h = Sha256::new();
    for part in [EXTRACTION_TEMPLATE, CATEGORY_TEMPLATE, REFORMAT_INSTRUCTION] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

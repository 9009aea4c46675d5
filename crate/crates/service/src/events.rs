//! Messages pushed to observers over the session stream.

use dlot_core::{PromptSpec, Timestamp};
use serde::{Deserialize, Serialize};

/// One stream message. Serialized as a JSON object tagged by `type`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StreamEvent {
    PromptOpened {
        #[serde(flatten)]
        prompt: PromptSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        subject_name: Option<String>,
        /// Prompts issued so far, this one included.
        prompts_issued: u64,
        /// Sent on connect for a prompt that was already open.
        #[serde(default)]
        replay: bool,
        /// Whether the receiving observer already answered this prompt.
        /// Only meaningful on replay messages.
        #[serde(default)]
        answered: bool,
    },
    PromptExpired {
        #[serde(flatten)]
        prompt: PromptSpec,
    },
    SessionEnded {
        ended_at: Timestamp,
    },
    Heartbeat {
        server_time: Timestamp,
        prompts_issued: u64,
    },
}

impl StreamEvent {
    pub fn prompt_index(&self) -> Option<u64> {
        match self {
            StreamEvent::PromptOpened { prompt, .. } | StreamEvent::PromptExpired { prompt } => {
                Some(prompt.prompt_index)
            }
            _ => None,
        }
    }
}

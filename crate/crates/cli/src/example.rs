use dlot_core::Timestamp;

/// An annotated starter config. Keys beginning with `_` are ignored by the
/// validator.
pub fn config(created_at: Timestamp) -> String {
    format!(
        r#"{{
  "_comment": "Session config for dlot. Keys starting with an underscore are comments.",
  "session_id": "classroom-affect-01",
  "title": "Classroom affect, period 3",
  "created_at": "{created_at}",
  "scheme": {{
    "_comment": "single: exactly one label per prompt (radio). multiple: any number, including none (checklist).",
    "groups": [
      {{
        "name": "affect",
        "selection": "single",
        "labels": ["engaged", "boredom", "confusion", "frustration", "neutral"]
      }},
      {{
        "name": "behaviour",
        "selection": "multiple",
        "labels": ["on task", "talking", "off task"]
      }}
    ]
  }},
  "roster": {{
    "_comment": "Prompts rotate through subjects in this order.",
    "subjects": [
      {{ "id": "s01", "display_name": "Student 1" }},
      {{ "id": "s02", "display_name": "Student 2" }},
      {{ "id": "s03", "display_name": "Student 3" }},
      {{ "id": "s04", "display_name": "Student 4", "group_tag": "team-b" }}
    ]
  }},
  "timer": {{
    "_comment": "Time between prompts; each prompt can be answered until the next one is due.",
    "interval_ms": 10000
  }},
  "_scheduling_modes": "round_robin | single_subject (roster of one) | free_select (observer picks the subject)",
  "scheduling_mode": "round_robin",
  "observer_ids": ["o1", "o2"]
}}
"#
    )
}

//! Prompt templates. Slots are written `{{ name }}`.

use crate::annotate::PatternLibrary;
use crate::detector::ast::Arg;
use crate::detector::Prim;
use crate::trace::Scene;

pub const REWARD_TEMPLATE: &str = "\
Write one reward program for the goal below using the reward language described further down. \
An optimizer will search for an action that maximizes the program's score, so the program should \
reward progress toward the goal and not only the final state. Conjunctions of several clauses give \
the optimizer partial credit for each satisfied step. Do not put comments in the program.

Goal:
{{ goal }}

Reward language:
{{ dsl_guide }}

Pattern library (uid | label | parameters | description):
{{ library_summary }}

Scene objects (id | description | kind | color | mobility | position):
{{ scene_summary }}

Worked examples:
{{ examples }}

Reason inside <think></think>, then give the program inside <answer></answer> wrapped in a ```dsl fence:
<think>...</think>
<answer>```dsl
...
```</answer>
";

pub const REPAIR_TEMPLATE: &str = "\
{{ prompt }}

Your previous program was rejected.

Program:
```dsl
{{ candidate }}
```

Error:
{{ error }}

Return a corrected program in the same answer format.
";

pub const DETECTOR_TEMPLATE: &str = "\
Improve a pattern detector written in DetectorScript. A detector reads a physics trace and fires at \
the frames where its pattern is active.

Pattern label: {{ label }}
Pattern description:
{{ description }}

{{ trace_spec }}

DetectorScript:
{{ detector_guide }}

Patterns already in the library (usable through event_active / event_involves):
{{ library_summary }}

Requirements:
- The detector must not fire on every frame.
- Prefer simple thresholds and short expressions.
- Detect something the existing library does not already cover; reuse library events only as inputs.

Current detectors:
{{ parents }}

Problems with the current detectors:
{{ errors }}

Answer with a short reasoning paragraph, then the new detector in a ```detector fence, then a ```json \
fence mapping each emitted parameter name to its type.
";

pub const LABEL_TEMPLATE: &str = "\
Suggest new, reusable pattern labels for traces of a 2D physics puzzle. Each label will later seed \
a detector, and analysts use the labels to read traces at a glance.

{{ trace_spec }}

The only objective in these puzzles is for the green object to touch the blue object.

Library so far (uid | label | parameters | description):
{{ library_table }}

Notes from earlier analyses:
{{ notes }}

Propose {{ K }} patterns that are not already in the library or close to an existing one. Each item \
needs a `reason` (why it helps with the objective), a `description` (one sentence) and a `label` \
(three to seven words, not tied to a particular scene).

Think first, then give a JSON array in a ```json fence:
```json
[{\"reason\": \"...\", \"description\": \"...\", \"label\": \"...\"}]
```
";

pub const TRACE_SPEC: &str = "\
Traces come from a 256 x 256 scene. The player places one red ball (x, y, radius) and the scene \
then evolves under gravity. A trace holds the action, the initial scene objects, a list of frames \
with the dynamic objects' state, and a list of events. Times are normalized: 0 is the first frame \
and 1 the last. Every object has an id, a color (red, green, blue, black), a kind (circle, bar, \
jar, standingsticks), a velocity, an angle and a static flag. Static objects appear only in the \
scene. Built-in events are CollisionStart and CollisionEnd (with a_id and b_id; walls and floor \
have negative ids) and a final TaskComplete event whose `success` flag says whether green and blue \
touch at the end.";

pub const DSL_GUIDE: &str = "\
EVENT(\"id\", {params}) holds when an event with that uid or label occurs; the optional map must \
match the event's parameters (strings case-insensitive, numbers by value).
AND(e1, e2, ...), OR(e1, e2, ...), NOT(e).
AFTER(\"a\", \"b\", min_delta=None, max_delta=None, first_params=None, second_params=None): some `a` \
occurs strictly after some `b`, with the gap inside the optional bounds.
WITHIN(\"a\", \"b\", window, event_params=None, reference_params=None): some `a` occurs at most \
`window` after some `b`.
COUNT(\"id\", n, params=None), GT(\"id\", n, params=None), LT(\"id\", n, params=None): exactly, more \
than, or fewer than n matching events.
NEARBY_AT(obj, x, y, t, threshold_strength=0.1): the object is within threshold_strength * 256 of \
(x, y) at normalized time t.
OBJECT_ID(\"color\", \"shape\") names an object; shape is bar, circle, jar, standingsticks or any. \
NEARBY_AT also accepts an integer id or a name such as \"green ball\".
Identifiers must be built-in events (CollisionStart, CollisionEnd, TaskComplete) or library uids \
or labels. Times are in [0, 1].";

/// Goal and program pairs shown to the model; written for this project.
pub const FEW_SHOT: [(&str, &str); 3] = [
    (
        "Knock the green ball off its ledge so it lands on the floor.",
        r#"AND(EVENT("CollisionStart", {"a_id": OBJECT_ID("green", "circle"), "b_id": OBJECT_ID("red", "circle")}), EVENT("CollisionStart", {"a_id": OBJECT_ID("green", "circle"), "b_id": -1}))"#,
    ),
    (
        "Make the green ball end up near the right side of the scene.",
        r#"AND(EVENT("CollisionStart", {"b_id": OBJECT_ID("red", "circle")}), NEARBY_AT("green ball", 220.0, 20.0, 1.0, threshold_strength=0.15))"#,
    ),
    (
        "Get the green object to touch the blue object without the red ball touching blue.",
        r#"AND(EVENT("TaskComplete", {"success": True}), NOT(EVENT("CollisionStart", {"a_id": OBJECT_ID("blue", "any"), "b_id": OBJECT_ID("red", "circle")})))"#,
    ),
];

/// Replaces every `{{ key }}` slot.
pub fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in slots {
        out = out.replace(&format!("{{{{ {k} }}}}"), v);
    }
    out
}

pub fn few_shot_text() -> String {
    FEW_SHOT
        .iter()
        .map(|(g, p)| format!("Goal: {g}\n```dsl\n{p}\n```"))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Grammar and primitive table of the detector language.
pub fn detector_guide() -> String {
    let mut out = String::from(
        "DETECT name [PARAMS {key: int|float|bool|text, ...}] WHERE expr [EMIT {key: expr, ...}]\n\
         The detector fires at every frame where `expr` holds. Operators: and, or, not, + - * /, \
         < <= > >= == !=. Quantifiers: exists_object(o, filter, expr) and forall_object(o, filter, \
         expr) with filter any, dynamic, static, boundary, a color or a kind; each satisfying binding \
         of a leading exists_object emits its own event. event_active(\"uid\", {key: value}) and \
         event_involves(\"uid\", object) read built-in and library events at the current frame.\n\
         Primitives:\n",
    );
    for p in Prim::ALL {
        let args: Vec<String> = p
            .args()
            .iter()
            .map(|a| match a {
                Arg::T(t) => t.to_string(),
                Arg::Any => "value".to_string(),
            })
            .collect();
        out.push_str(&format!("  {}({}) -> {}\n", p.name(), args.join(", "), p.ret()));
    }
    out.push_str("Example:\nDETECT hit PARAMS {object_id: int} WHERE exists_object(o, dynamic, event_active(\"CollisionStart\", {b_id: o})) EMIT {object_id: o}");
    out
}

pub fn scene_summary(scene: &Scene) -> String {
    let mut out = String::new();
    for o in &scene.objects {
        let p = o.position();
        out.push_str(&format!(
            "{} | {} | {} | {} | {} | ({:.1}, {:.1})\n",
            o.id,
            o.description,
            o.kind,
            o.color,
            if o.is_static { "static" } else { "dynamic" },
            p.x,
            p.y
        ));
    }
    let next = scene.next_id();
    out.push_str(&format!("{next} | red-circle-{next} (the action ball, placed by the optimizer) | circle | red | dynamic | (x, y)\n"));
    out
}

pub fn reward_prompt(goal: &str, library: &PatternLibrary, scene: &Scene) -> String {
    fill(
        REWARD_TEMPLATE,
        &[
            ("goal", goal),
            ("dsl_guide", DSL_GUIDE),
            ("library_summary", &library.summary()),
            ("scene_summary", &scene_summary(scene)),
            ("examples", &few_shot_text()),
        ],
    )
}

pub fn repair_prompt(prompt: &str, candidate: &str, error: &str) -> String {
    fill(REPAIR_TEMPLATE, &[("prompt", prompt), ("candidate", candidate), ("error", error)])
}

pub fn detector_prompt(label: &str, description: &str, library_summary: &str, parents: &[String], errors: &str) -> String {
    let parents = parents
        .iter()
        .map(|p| format!("```detector\n{p}\n```"))
        .collect::<Vec<_>>()
        .join("\n");
    fill(
        DETECTOR_TEMPLATE,
        &[
            ("label", label),
            ("description", description),
            ("trace_spec", TRACE_SPEC),
            ("detector_guide", &detector_guide()),
            ("library_summary", library_summary),
            ("parents", &parents),
            ("errors", if errors.is_empty() { "none" } else { errors }),
        ],
    )
}

pub fn label_prompt(library: &PatternLibrary, notes: &[String], k: usize) -> String {
    let notes = if notes.is_empty() {
        "none".to_string()
    } else {
        notes.iter().map(|n| format!("- {n}")).collect::<Vec<_>>().join("\n")
    };
    fill(
        LABEL_TEMPLATE,
        &[
            ("trace_spec", TRACE_SPEC),
            ("library_table", &library.summary()),
            ("notes", &notes),
            ("K", &k.to_string()),
        ],
    )
}

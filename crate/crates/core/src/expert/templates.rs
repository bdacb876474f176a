//! Templated step-by-step instructions and goal statements.
//!
//! Patterns use `{slot}` for values filled from the trajectory and `[a|b|c]` for
//! synonym pools drawn with a seeded RNG.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::plan::{Direction, ExpertTrajectory, Instructions};
use crate::tasks::{GoalCondition, SubgoalKind, TaskSpec, TaskType};
use crate::world::ObjectClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TemplateScope {
    Subgoal(SubgoalKind),
    Goal(TaskType),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionTemplate {
    pub id: &'static str,
    pub scope: TemplateScope,
    pub pattern: &'static str,
}

macro_rules! templates {
    ($($id:literal, $scope:expr, $pattern:literal;)+) => {
        &[$(InstructionTemplate { id: $id, scope: $scope, pattern: $pattern },)+]
    };
}

use SubgoalKind as K;
use TemplateScope::{Goal as G, Subgoal as S};

pub const TEMPLATES: &[InstructionTemplate] = templates! {
    "goto.0", S(K::GotoLocation), "{dir}[walk|go|head|move] to the {recep}";
    "goto.1", S(K::GotoLocation), "{dir}[walk|go|head|move] over to the {obj} on the {recep}";
    "goto.2", S(K::GotoLocation), "{dir}[find|locate|approach] the {recep}";
    "pickup.0", S(K::PickupObject), "[pick up|grab|take|lift] the {obj} [on|from] the {recep}";
    "pickup.1", S(K::PickupObject), "[pick up|grab|take|lift] the {obj}";
    "pickup.2", S(K::PickupObject), "[get|collect|retrieve] the {obj} [from|off] the {recep}";
    "put.0", S(K::PutObject), "[put|place|set|leave] the {obj} [on|in] the {recep}";
    "put.1", S(K::PutObject), "[put|place|set] the {obj} down on the {recep}";
    "put.2", S(K::PutObject), "[drop|deposit|stash] the {obj} [onto|into] the {recep}";
    "heat.0", S(K::HeatObject), "[heat|warm|cook|microwave] the {obj} in the {recep}";
    "heat.1", S(K::HeatObject), "[heat up|warm up] the {obj}";
    "heat.2", S(K::HeatObject), "[use|run] the {recep} to [heat|warm|cook] the {obj}";
    "cool.0", S(K::CoolObject), "[chill|cool|refrigerate] the {obj} in the {recep}";
    "cool.1", S(K::CoolObject), "[put|place] the {obj} in the {recep} to [chill|cool] it";
    "cool.2", S(K::CoolObject), "[cool down|chill] the {obj}";
    "clean.0", S(K::CleanObject), "[rinse|wash|clean|scrub] the {obj} in the {recep}";
    "clean.1", S(K::CleanObject), "[rinse off|wash off] the {obj} under the [faucet|tap]";
    "clean.2", S(K::CleanObject), "[clean|wash] the {obj}";
    "slice.0", S(K::SliceObject), "[slice|cut|chop] the {obj} with the knife";
    "slice.1", S(K::SliceObject), "[slice up|cut up|chop up] the {obj}";
    "toggle.0", S(K::ToggleObject), "[turn on|switch on|light] the {obj}";
    "toggle.1", S(K::ToggleObject), "[turn|switch] the {obj} on";
    "goal.pick.0", G(TaskType::PickAndPlace), "[put|place|move] [a|the] {sl}{obj} [on|in] the {recep}";
    "goal.pick.1", G(TaskType::PickAndPlace), "[bring|carry] [a|the] {sl}{obj} to the {recep}";
    "goal.cool.0", G(TaskType::CoolAndPlace), "[put|place] a [cold|chilled|cool] {sl}{obj} [on|in] the {recep}";
    "goal.cool.1", G(TaskType::CoolAndPlace), "[chill|cool] a {sl}{obj} and [put|place] it [on|in] the {recep}";
    "goal.heat.0", G(TaskType::HeatAndPlace), "[put|place] a [hot|heated|warm] {sl}{obj} [on|in] the {recep}";
    "goal.heat.1", G(TaskType::HeatAndPlace), "[heat|cook] a {sl}{obj} and [put|place] it [on|in] the {recep}";
    "goal.clean.0", G(TaskType::CleanAndPlace), "[put|place] a [clean|washed|rinsed] {obj} [on|in] the {recep}";
    "goal.clean.1", G(TaskType::CleanAndPlace), "[wash|rinse|clean] a {obj} and [put|place] it [on|in] the {recep}";
    "goal.stack.0", G(TaskType::StackAndPlace), "[put|place] a {cont} [with|containing] a {obj} [on|in] the {recep}";
    "goal.stack.1", G(TaskType::StackAndPlace), "[move|carry] a {obj} in a {cont} to the {recep}";
    "goal.examine.0", G(TaskType::Examine), "[examine|inspect|look at] [a|the] {obj} [under|by] the {recep}";
    "goal.examine.1", G(TaskType::Examine), "[pick up|hold] the {obj} and turn on the {recep}";
    "goal.two.0", G(TaskType::PickTwoAndPlace), "[put|place] two {obj} [items|objects] [on|in] the {recep}";
    "goal.two.1", G(TaskType::PickTwoAndPlace), "[move|carry] two {obj} [items|objects] to the {recep}";
};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(&'static str),
    Pool(Vec<&'static str>),
    Slot(&'static str),
}

fn parse(pattern: &'static str) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut rest = pattern;
    while !rest.is_empty() {
        let (open, close) = match rest.as_bytes()[0] {
            b'{' => ('{', '}'),
            b'[' => ('[', ']'),
            _ => {
                let end = rest.find(['{', '[']).unwrap_or(rest.len());
                out.push(Segment::Text(&rest[..end]));
                rest = &rest[end..];
                continue;
            }
        };
        let end = rest.find(close).expect("template brackets are balanced");
        let inner = &rest[1..end];
        out.push(if open == '{' { Segment::Slot(inner) } else { Segment::Pool(inner.split('|').collect()) });
        rest = &rest[end + 1..];
    }
    out
}

pub fn direction_phrase(direction: Option<Direction>) -> &'static str {
    match direction {
        None => "",
        Some(Direction::Straight) => "go straight and ",
        Some(Direction::Left) => "turn left and ",
        Some(Direction::Right) => "turn right and ",
        Some(Direction::Around) => "turn around and ",
    }
}

/// Values available to fill a template.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SlotValues {
    pub direction: Option<Direction>,
    pub obj: Option<ObjectClass>,
    pub recep: Option<ObjectClass>,
    pub cont: Option<ObjectClass>,
    pub sliced: bool,
}

impl SlotValues {
    fn fits(&self, template: &InstructionTemplate) -> bool {
        let segs = parse(template.pattern);
        let has = |name: &str| segs.iter().any(|s| matches!(s, Segment::Slot(n) if *n == name));
        let ok = (!has("obj") || self.obj.is_some())
            && (!has("recep") || self.recep.is_some())
            && (!has("cont") || self.cont.is_some());
        // describing the target "on" itself reads wrong
        let redundant = has("obj") && has("recep") && self.obj == self.recep;
        ok && !(redundant && matches!(template.scope, TemplateScope::Subgoal(K::GotoLocation | K::PickupObject)))
    }
}

/// Source of synonym choices: the first entry everywhere, or a seeded draw.
pub enum Chooser<'a> {
    Canonical,
    Random(&'a mut ChaCha8Rng),
}

impl Chooser<'_> {
    fn pick(&mut self, n: usize) -> usize {
        match self {
            Chooser::Canonical => 0,
            Chooser::Random(rng) => rng.gen_range(0..n),
        }
    }
}

pub fn render(template: &InstructionTemplate, values: &SlotValues, chooser: &mut Chooser) -> String {
    let mut out = String::new();
    let name = |class: Option<ObjectClass>, chooser: &mut Chooser| {
        let names = class.expect("slot value checked by fits").names();
        names[chooser.pick(names.len())]
    };
    for seg in parse(template.pattern) {
        match seg {
            Segment::Text(t) => out.push_str(t),
            Segment::Pool(words) => out.push_str(words[chooser.pick(words.len())]),
            Segment::Slot("dir") => out.push_str(direction_phrase(values.direction)),
            Segment::Slot("sl") => out.push_str(if values.sliced { "sliced " } else { "" }),
            Segment::Slot("obj") => out.push_str(name(values.obj, chooser)),
            Segment::Slot("recep") => out.push_str(name(values.recep, chooser)),
            Segment::Slot("cont") => out.push_str(name(values.cont, chooser)),
            Segment::Slot(other) => panic!("unknown template slot {other}"),
        }
    }
    out
}

pub fn templates_for(scope: TemplateScope) -> impl Iterator<Item = &'static InstructionTemplate> {
    TEMPLATES.iter().filter(move |t| t.scope == scope)
}

/// Renders with a template drawn among those whose slots can be filled.
pub fn render_scope(scope: TemplateScope, values: &SlotValues, chooser: &mut Chooser) -> String {
    let eligible: Vec<_> = templates_for(scope).filter(|t| values.fits(t)).collect();
    assert!(!eligible.is_empty(), "no template for {scope:?} fits {values:?}");
    let t = eligible[chooser.pick(eligible.len())];
    render(t, values, chooser)
}

fn goal_values(spec: &TaskSpec) -> SlotValues {
    let mut v = SlotValues { obj: Some(spec.main_object()), sliced: spec.is_sliced_variant(), ..Default::default() };
    for c in &spec.conditions {
        match *c {
            GoalCondition::ObjectInReceptacle { object, receptacle, .. } => {
                if receptacle.is_movable_container() {
                    v.cont = Some(receptacle);
                    v.obj = Some(object);
                } else {
                    v.recep = Some(receptacle);
                }
            }
            GoalCondition::LampOnWhileHolding { object, lamp } => {
                v.obj = Some(object);
                v.recep = Some(lamp);
            }
            _ => {}
        }
    }
    v
}

/// Slot values describing subgoal `index` of a trajectory.
pub fn subgoal_values(traj: &ExpertTrajectory, index: usize) -> SlotValues {
    let sg = traj.task.subgoals[index];
    let ctx = traj.contexts[index];
    let recep = match sg.kind {
        K::GotoLocation | K::PickupObject => ctx.landmark,
        K::PutObject | K::HeatObject | K::CoolObject | K::CleanObject => sg.receptacle_class,
        K::SliceObject | K::ToggleObject => None,
    };
    SlotValues { direction: ctx.direction, obj: Some(sg.target_class), recep, cont: None, sliced: false }
}

/// Goal statement plus one instruction per subgoal; identical inputs give identical text.
pub fn generate_instructions(traj: &ExpertTrajectory, seed: u64) -> Instructions {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1A57_0000_0000_0000);
    let mut chooser = Chooser::Random(&mut rng);
    let goal = render_scope(TemplateScope::Goal(traj.task.task_type), &goal_values(&traj.task), &mut chooser);
    let steps = (0..traj.task.subgoals.len())
        .map(|i| {
            let scope = TemplateScope::Subgoal(traj.task.subgoals[i].kind);
            render_scope(scope, &subgoal_values(traj, i), &mut chooser)
        })
        .collect();
    Instructions { goal, steps }
}

fn class_alternation() -> String {
    let mut names: Vec<&str> = ObjectClass::ALL.iter().flat_map(|c| c.names().iter().copied()).collect();
    names.sort_by_key(|n| std::cmp::Reverse(n.len()));
    format!("(?:{})", names.iter().map(|n| regex::escape(n)).collect::<Vec<_>>().join("|"))
}

fn template_regex(template: &InstructionTemplate) -> Regex {
    let classes = class_alternation();
    let dirs = [
        Direction::Straight,
        Direction::Left,
        Direction::Right,
        Direction::Around,
    ]
    .map(|d| regex::escape(direction_phrase(Some(d))))
    .join("|");
    let mut re = String::from("^");
    for seg in parse(template.pattern) {
        match seg {
            Segment::Text(t) => re.push_str(&regex::escape(t)),
            Segment::Pool(words) => {
                re.push_str(&format!("(?:{})", words.iter().map(|w| regex::escape(w)).collect::<Vec<_>>().join("|")))
            }
            Segment::Slot("dir") => re.push_str(&format!("(?:{dirs})?")),
            Segment::Slot("sl") => re.push_str("(?:sliced )?"),
            Segment::Slot(_) => re.push_str(&classes),
        }
    }
    re.push('$');
    Regex::new(&re).expect("template regex is valid")
}

fn subgoal_regexes() -> &'static Vec<(SubgoalKind, Regex)> {
    static CELL: OnceLock<Vec<(SubgoalKind, Regex)>> = OnceLock::new();
    CELL.get_or_init(|| {
        TEMPLATES
            .iter()
            .filter_map(|t| match t.scope {
                TemplateScope::Subgoal(k) => Some((k, template_regex(t))),
                TemplateScope::Goal(_) => None,
            })
            .collect()
    })
}

/// Inverse template map: the subgoal kind whose templates (and only those) match `text`.
pub fn recover_kind(text: &str) -> Option<SubgoalKind> {
    let norm = crate::lang::normalize(text);
    let kinds: BTreeSet<SubgoalKind> =
        subgoal_regexes().iter().filter(|(_, re)| re.is_match(&norm)).map(|(k, _)| *k).collect();
    if kinds.len() == 1 {
        kinds.into_iter().next()
    } else {
        None
    }
}

/// Every word any template can produce.
pub fn template_words() -> BTreeSet<String> {
    let mut words = BTreeSet::new();
    let mut add = |s: &str| {
        for w in crate::lang::normalize(s).split_whitespace() {
            words.insert(w.to_string());
        }
    };
    for t in TEMPLATES {
        for seg in parse(t.pattern) {
            match seg {
                Segment::Text(s) => add(s),
                Segment::Pool(ws) => ws.iter().for_each(|w| add(w)),
                Segment::Slot(_) => {}
            }
        }
    }
    for c in ObjectClass::ALL {
        c.names().iter().for_each(|n| add(n));
    }
    for d in [Direction::Straight, Direction::Left, Direction::Right, Direction::Around] {
        add(direction_phrase(Some(d)));
    }
    add("sliced");
    words
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_pickup_rendering() {
        let values = SlotValues {
            obj: Some(ObjectClass::CreditCard),
            recep: Some(ObjectClass::TvStand),
            ..Default::default()
        };
        let text = render_scope(TemplateScope::Subgoal(K::PickupObject), &values, &mut Chooser::Canonical);
        assert_eq!(text, "pick up the credit card on the tv stand");
        assert_eq!(recover_kind(&text), Some(K::PickupObject));
    }

    #[test]
    fn every_template_parses_and_inverts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for t in TEMPLATES {
            let values = SlotValues {
                direction: Some(Direction::Around),
                obj: Some(ObjectClass::Apple),
                recep: Some(ObjectClass::CounterTop),
                cont: Some(ObjectClass::Bowl),
                sliced: false,
            };
            for _ in 0..20 {
                let text = render(t, &values, &mut Chooser::Random(&mut rng));
                assert!(!text.contains(['{', '[']), "{text}");
                if let TemplateScope::Subgoal(k) = t.scope {
                    assert_eq!(recover_kind(&text), Some(k), "{} -> {text}", t.id);
                }
            }
        }
    }

    #[test]
    fn kinds_have_two_or_three_frames() {
        for k in SubgoalKind::ALL {
            let n = templates_for(TemplateScope::Subgoal(k)).count();
            assert!((2..=3).contains(&n), "{k}: {n}");
        }
        for t in TaskType::ALL {
            assert!(templates_for(TemplateScope::Goal(t)).count() >= 2);
        }
    }

    #[test]
    fn navigation_example_is_goto() {
        assert_eq!(recover_kind("turn around and walk to the garbage bin"), Some(K::GotoLocation));
    }
}

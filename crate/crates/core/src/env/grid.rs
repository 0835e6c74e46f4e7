//! Text format for grid worlds.
//!
//! ```text
//! # comment
//! slip = 0.05
//! default_reward = -0.1
//! reset_cost = -10
//! start = 0,0 4,0
//! actions = buy sell
//! observations = m e
//!
//! [grid]
//! .m.#.
//! ...e.
//!
//! [bindings]
//! m buy m
//! e * e
//!
//! [effects]
//! ask: Aa -> Aa
//! ```
//!
//! `#` is a wall, `.` a free cell, any other character an item. A binding
//! `<item> <action|*> <observation>` makes that action emit the observation
//! whenever it lands on a cell holding the item. An effect `<action>: <items>
//! -> <items>` teleports the agent, uniformly, from a cell holding one of the
//! first items to the cells holding the second ones. Every action stays put
//! with probability `slip`.

use crate::error::{Error, Result};
use crate::mdp::{Alphabet, LabelingFunction, Nrmdp, Observation, Row};
use crate::solver::merge_row;

pub const MOVES: [&str; 4] = ["north", "east", "south", "west"];
const DELTAS: [(isize, isize); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub wall: bool,
    pub item: Option<char>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Binding {
    pub item: char,
    /// `None` matches every action.
    pub action: Option<String>,
    pub observation: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Effect {
    pub action: String,
    pub from: Vec<char>,
    pub to: Vec<char>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    /// Row-major, `y * width + x`.
    pub cells: Vec<Cell>,
    pub slip: f64,
    pub default_reward: f64,
    pub reset_cost: f64,
    pub starts: Vec<(usize, usize)>,
    /// Domain actions, after the four moves.
    pub actions: Vec<String>,
    pub observations: Vec<String>,
    pub bindings: Vec<Binding>,
    pub effects: Vec<Effect>,
}

impl GridSpec {
    pub fn cell(&self, x: usize, y: usize) -> Cell {
        self.cells[y * self.width + x]
    }

    pub fn action_names(&self) -> Vec<String> {
        MOVES
            .iter()
            .map(|s| s.to_string())
            .chain(self.actions.iter().cloned())
            .collect()
    }

    /// Non-wall cells in row-major order; these become the MDP states.
    pub fn free_cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if !self.cell(x, y).wall {
                    out.push((x, y));
                }
            }
        }
        out
    }
}

#[derive(PartialEq)]
enum Section {
    Header,
    Grid,
    Bindings,
    Effects,
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

pub fn load_grid(text: &str) -> Result<GridSpec> {
    let mut section = Section::Header;
    let mut slip = 0.05;
    let mut default_reward = 0.0;
    let mut reset_cost = 0.0;
    let mut starts: Vec<(usize, usize, usize)> = Vec::new();
    let mut actions = Vec::new();
    let mut observations = Vec::new();
    let mut rows: Vec<(usize, &str)> = Vec::new();
    let mut bindings = Vec::new();
    let mut effects = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end();
        if line.trim_start().starts_with('#') && section != Section::Grid {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        match line.trim() {
            "[grid]" => {
                section = Section::Grid;
                continue;
            }
            "[bindings]" => {
                section = Section::Bindings;
                continue;
            }
            "[effects]" => {
                section = Section::Effects;
                continue;
            }
            s if s.starts_with('[') => {
                return Err(parse_err(line_no, 1, format!("unknown section {s}")))
            }
            _ => {}
        }
        match section {
            Section::Header => {
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| parse_err(line_no, 1, "expected `key = value`"))?;
                let value = value.trim();
                let col = line.find('=').unwrap() + 2;
                let num = |v: &str| -> Result<f64> {
                    v.parse()
                        .map_err(|_| parse_err(line_no, col, format!("not a number: {v}")))
                };
                match key.trim() {
                    "slip" => slip = num(value)?,
                    "default_reward" => default_reward = num(value)?,
                    "reset_cost" => reset_cost = num(value)?,
                    "start" => {
                        for tok in value.split_whitespace() {
                            let (x, y) = tok.split_once(',').ok_or_else(|| {
                                parse_err(line_no, col, format!("bad coordinate {tok}"))
                            })?;
                            let x = x
                                .parse()
                                .map_err(|_| parse_err(line_no, col, format!("bad x in {tok}")))?;
                            let y = y
                                .parse()
                                .map_err(|_| parse_err(line_no, col, format!("bad y in {tok}")))?;
                            starts.push((x, y, line_no));
                        }
                    }
                    "actions" => actions = value.split_whitespace().map(String::from).collect(),
                    "observations" => {
                        observations = value.split_whitespace().map(String::from).collect()
                    }
                    other => return Err(parse_err(line_no, 1, format!("unknown key {other}"))),
                }
            }
            Section::Grid => rows.push((line_no, line)),
            Section::Bindings => {
                let parts: Vec<&str> = line.split_whitespace().collect();
                if parts.len() != 3 || parts[0].chars().count() != 1 {
                    return Err(parse_err(
                        line_no,
                        1,
                        "expected `<item> <action|*> <observation>`",
                    ));
                }
                bindings.push(Binding {
                    item: parts[0].chars().next().unwrap(),
                    action: (parts[1] != "*").then(|| parts[1].to_string()),
                    observation: parts[2].to_string(),
                });
            }
            Section::Effects => {
                let (action, rule) = line.split_once(':').ok_or_else(|| {
                    parse_err(line_no, 1, "expected `<action>: <items> -> <items>`")
                })?;
                let (from, to) = rule
                    .split_once("->")
                    .ok_or_else(|| parse_err(line_no, action.len() + 1, "missing `->`"))?;
                effects.push(Effect {
                    action: action.trim().to_string(),
                    from: from.trim().chars().collect(),
                    to: to.trim().chars().collect(),
                });
            }
        }
    }

    if rows.is_empty() {
        return Err(parse_err(
            text.lines().count().max(1),
            1,
            "missing [grid] section",
        ));
    }
    let width = rows[0].1.chars().count();
    let mut cells = Vec::new();
    for (line_no, row) in &rows {
        if row.chars().count() != width {
            return Err(parse_err(
                *line_no,
                1,
                format!("grid rows must all have width {width}"),
            ));
        }
        for ch in row.chars() {
            cells.push(match ch {
                '#' => Cell {
                    wall: true,
                    item: None,
                },
                '.' => Cell {
                    wall: false,
                    item: None,
                },
                c if c.is_whitespace() => {
                    return Err(parse_err(*line_no, 1, "whitespace inside grid"))
                }
                c => Cell {
                    wall: false,
                    item: Some(c),
                },
            });
        }
    }
    let height = rows.len();

    if !(0.0..1.0).contains(&slip) {
        return Err(parse_err(
            1,
            1,
            format!("slip must lie in [0, 1), got {slip}"),
        ));
    }
    let action_ok = |a: &str| MOVES.contains(&a) || actions.iter().any(|x| x == a);
    for b in &bindings {
        if !observations.contains(&b.observation) {
            return Err(Error::UnknownSymbol(format!(
                "binding uses unknown observation {}",
                b.observation
            )));
        }
        if let Some(a) = &b.action {
            if !action_ok(a) {
                return Err(Error::invalid(format!("binding uses unknown action {a}")));
            }
        }
    }
    for e in &effects {
        if !action_ok(&e.action) {
            return Err(Error::invalid(format!(
                "effect uses unknown action {}",
                e.action
            )));
        }
    }
    let mut start_cells = Vec::new();
    for (x, y, line_no) in starts {
        if x >= width || y >= height || cells[y * width + x].wall {
            return Err(parse_err(
                line_no,
                1,
                format!("start {x},{y} is outside the grid or a wall"),
            ));
        }
        start_cells.push((x, y));
    }
    if start_cells.is_empty() {
        return Err(parse_err(1, 1, "no start cell"));
    }

    Ok(GridSpec {
        width,
        height,
        cells,
        slip,
        default_reward,
        reset_cost,
        starts: start_cells,
        actions,
        observations,
        bindings,
        effects,
    })
}

/// Builds the MDP and labeling function. With several start cells an extra
/// initial state `start` moves uniformly into one of them on any action.
pub fn compile(spec: &GridSpec) -> Result<(Nrmdp, LabelingFunction)> {
    let free = spec.free_cells();
    let mut index = vec![usize::MAX; spec.width * spec.height];
    for (i, &(x, y)) in free.iter().enumerate() {
        index[y * spec.width + x] = i;
    }
    let id = |x: usize, y: usize| index[y * spec.width + x];
    let multi = spec.starts.len() > 1;
    let n = free.len() + usize::from(multi);
    let action_names = spec.action_names();
    let k = action_names.len();

    let cells_with = |items: &[char]| -> Vec<usize> {
        free.iter()
            .filter(|&&(x, y)| spec.cell(x, y).item.is_some_and(|c| items.contains(&c)))
            .map(|&(x, y)| id(x, y))
            .collect()
    };
    let with_slip = |here: usize, targets: &[usize]| -> Row {
        let w = (1.0 - spec.slip) / targets.len() as f64;
        let mut row: Row = targets.iter().map(|&t| (t, w)).collect();
        if spec.slip > 0.0 {
            row.push((here, spec.slip));
        }
        merge_row(row)
    };

    let mut rows = Vec::with_capacity(n * k);
    for &(x, y) in &free {
        let here = id(x, y);
        for (a, name) in action_names.iter().enumerate() {
            if a < MOVES.len() {
                let (dx, dy) = DELTAS[a];
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                let inside =
                    nx >= 0 && ny >= 0 && (nx as usize) < spec.width && (ny as usize) < spec.height;
                let target = if inside && !spec.cell(nx as usize, ny as usize).wall {
                    id(nx as usize, ny as usize)
                } else {
                    here
                };
                rows.push(with_slip(here, &[target]));
                continue;
            }
            let item = spec.cell(x, y).item;
            let effect = spec
                .effects
                .iter()
                .find(|e| &e.action == name && item.is_some_and(|c| e.from.contains(&c)));
            match effect {
                Some(e) => {
                    let targets = cells_with(&e.to);
                    if targets.is_empty() {
                        return Err(Error::invalid(format!(
                            "effect of {} has no target cells",
                            e.action
                        )));
                    }
                    rows.push(with_slip(here, &targets));
                }
                None => rows.push(vec![(here, 1.0)]),
            }
        }
    }
    let mut state_names: Vec<String> = free
        .iter()
        .map(|&(x, y)| match spec.cell(x, y).item {
            Some(c) => format!("{x},{y}:{c}"),
            None => format!("{x},{y}"),
        })
        .collect();
    let initial = if multi {
        let mut starts: Vec<usize> = spec.starts.iter().map(|&(x, y)| id(x, y)).collect();
        starts.sort_unstable();
        starts.dedup();
        let w = 1.0 / starts.len() as f64;
        for _ in 0..k {
            rows.push(starts.iter().map(|&t| (t, w)).collect());
        }
        state_names.push("start".into());
        free.len()
    } else {
        id(spec.starts[0].0, spec.starts[0].1)
    };
    let model = Nrmdp::new(state_names, action_names.clone(), rows, initial)?;

    let alphabet = Alphabet::new(spec.observations.iter().cloned())?;
    let mut labels = LabelingFunction::new(alphabet, k, n);
    for &(x, y) in &free {
        let Some(item) = spec.cell(x, y).item else {
            continue;
        };
        for (a, name) in action_names.iter().enumerate() {
            let hit = spec
                .bindings
                .iter()
                .find(|b| b.item == item && b.action.as_ref().is_none_or(|x| x == name));
            if let Some(b) = hit {
                let z = labels.alphabet().index_of(&b.observation).unwrap();
                labels.set(a, id(x, y), Observation::Symbol(z))?;
            }
        }
    }
    Ok((model, labels))
}

//! TOML model files.
//!
//! ```toml
//! [net]
//! horizon = 20
//!
//! [game]                      # optional
//! preset = "majority"         # majority | unanimity | dictator:<i> | threshold
//! # weights = [2, 1, 1]       # threshold only
//! # quota = 3
//! # minimal_winning = [[1, 2], [2, 3]]   # instead of a preset
//!
//! [[sensor]]
//! states = 2
//! x0 = 0
//! pi0 = 0.05
//! p = 0.9
//! c = 0.1
//! pre = [[0.8, 0.2], [0.3, 0.7]]
//! post = [[0.3, 0.7], [0.1, 0.9]]
//! ```
//!
//! Players are numbered from 1 in the game block. Every error carries the
//! line it refers to.

use std::ops::Range;

use serde::Deserialize;
use toml::Spanned;

use crate::error::{Error, Result};
use crate::model::{GeometricPrior, NetModel, SensorModel, TransitionKernel};
use crate::simple_game::{Coalition, SimpleGame};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileSpec {
    net: Spanned<NetSpec>,
    game: Option<Spanned<GameSpec>>,
    #[serde(default)]
    sensor: Vec<Spanned<SensorSpec>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetSpec {
    horizon: Spanned<i64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GameSpec {
    preset: Option<Spanned<String>>,
    weights: Option<Spanned<Vec<f64>>>,
    quota: Option<Spanned<f64>>,
    minimal_winning: Option<Spanned<Vec<Spanned<Vec<i64>>>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SensorSpec {
    states: Spanned<i64>,
    x0: Spanned<i64>,
    pi0: Spanned<f64>,
    p: Spanned<f64>,
    c: Spanned<f64>,
    pre: Spanned<Vec<Spanned<Vec<f64>>>>,
    post: Spanned<Vec<Spanned<Vec<f64>>>>,
}

/// Parsed model file.
#[derive(Debug, Clone)]
pub struct ModelFile {
    pub net: NetModel,
    pub game: Option<SimpleGame>,
}

struct Lines<'a>(&'a str);

impl Lines<'_> {
    fn line(&self, span: Range<usize>) -> usize {
        let end = span.start.min(self.0.len());
        self.0[..end].bytes().filter(|&b| b == b'\n').count() + 1
    }

    fn err<T>(&self, span: Range<usize>, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse { line: self.line(span), message: message.into() })
    }
}

pub fn parse_model(text: &str) -> Result<ModelFile> {
    let lines = Lines(text);
    let spec: FileSpec = toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map_or(1, |s| lines.line(s)),
        message: e.message().trim().to_string(),
    })?;
    let horizon = &spec.net.get_ref().horizon;
    if *horizon.get_ref() < 0 {
        return lines.err(horizon.span(), "horizon must be non-negative");
    }
    if spec.sensor.is_empty() {
        return lines.err(spec.net.span(), "at least one [[sensor]] block is required");
    }
    let sensors = spec
        .sensor
        .iter()
        .map(|s| sensor(&lines, s))
        .collect::<Result<Vec<_>>>()?;
    let net = NetModel::new(sensors, *horizon.get_ref() as usize)
        .or_else(|e| lines.err(spec.net.span(), e.to_string()))?;
    let game = spec.game.as_ref().map(|g| game(&lines, g, net.size())).transpose()?;
    Ok(ModelFile { net, game })
}

fn kernel(lines: &Lines, rows: &Spanned<Vec<Spanned<Vec<f64>>>>, states: usize, name: &str) -> Result<TransitionKernel> {
    if rows.get_ref().len() != states {
        return lines.err(rows.span(), format!("{name} has {} rows, expected {states}", rows.get_ref().len()));
    }
    for row in rows.get_ref() {
        if row.get_ref().len() != states {
            return lines.err(row.span(), format!("{name} row has {} entries, expected {states}", row.get_ref().len()));
        }
    }
    let plain: Vec<Vec<f64>> = rows.get_ref().iter().map(|r| r.get_ref().clone()).collect();
    TransitionKernel::new(&plain).or_else(|e| {
        let span = match e {
            Error::NonStochasticRow { row, .. } | Error::NegativeEntry { row, .. } => rows.get_ref()[row].span(),
            _ => rows.span(),
        };
        lines.err(span, format!("{name}: {e}"))
    })
}

fn sensor(lines: &Lines, spec: &Spanned<SensorSpec>) -> Result<SensorModel> {
    let s = spec.get_ref();
    let states = *s.states.get_ref();
    if states < 2 {
        return lines.err(s.states.span(), "states must be at least 2");
    }
    let states = states as usize;
    let pre = kernel(lines, &s.pre, states, "pre")?;
    let post = kernel(lines, &s.post, states, "post")?;
    let prior = GeometricPrior::new(*s.pi0.get_ref(), *s.p.get_ref()).or_else(|e| {
        let span = if (0.0..=1.0).contains(s.pi0.get_ref()) { s.p.span() } else { s.pi0.span() };
        lines.err(span, e.to_string())
    })?;
    if !(*s.c.get_ref() > 0.0) || !s.c.get_ref().is_finite() {
        return lines.err(s.c.span(), "delay cost c must be positive and finite");
    }
    let x0 = *s.x0.get_ref();
    if x0 < 0 || x0 as usize >= states {
        return lines.err(s.x0.span(), format!("x0 = {x0} is not a state in 0..{states}"));
    }
    SensorModel::new(pre, post, prior, *s.c.get_ref(), x0 as usize).or_else(|e| lines.err(spec.span(), e.to_string()))
}

fn player(lines: &Lines, span: Range<usize>, one_based: i64, players: usize) -> Result<usize> {
    if one_based < 1 || one_based as usize > players {
        return lines.err(span, format!("player {one_based} is outside 1..={players}"));
    }
    Ok(one_based as usize - 1)
}

fn game(lines: &Lines, spec: &Spanned<GameSpec>, players: usize) -> Result<SimpleGame> {
    let g = spec.get_ref();
    let at = |span: Range<usize>| move |e: Error| Error::Parse { line: lines.line(span.clone()), message: e.to_string() };
    match (&g.preset, &g.minimal_winning) {
        (Some(_), Some(m)) => lines.err(m.span(), "give either preset or minimal_winning, not both"),
        (None, None) => lines.err(spec.span(), "game needs a preset or minimal_winning"),
        (None, Some(m)) => {
            let coalitions = m
                .get_ref()
                .iter()
                .map(|c| {
                    c.get_ref()
                        .iter()
                        .map(|&i| player(lines, c.span(), i, players))
                        .collect::<Result<Vec<_>>>()
                        .map(|v| Coalition::from_players(&v))
                })
                .collect::<Result<Vec<_>>>()?;
            SimpleGame::from_minimal(players, &coalitions).map_err(at(m.span()))
        }
        (Some(preset), None) => {
            let span = preset.span();
            let name = preset.get_ref().as_str();
            if name != "threshold" && (g.weights.is_some() || g.quota.is_some()) {
                return lines.err(span, "weights and quota belong to the threshold preset");
            }
            match name {
                "majority" => SimpleGame::majority(players).map_err(at(span)),
                "unanimity" => SimpleGame::unanimity(players).map_err(at(span)),
                "threshold" => {
                    let (Some(w), Some(q)) = (&g.weights, &g.quota) else {
                        return lines.err(span, "threshold preset needs weights and quota");
                    };
                    if w.get_ref().len() != players {
                        return lines.err(w.span(), format!("{} weights for {players} sensors", w.get_ref().len()));
                    }
                    SimpleGame::weighted_threshold(w.get_ref(), *q.get_ref()).map_err(at(q.span()))
                }
                other => match other.strip_prefix("dictator:").map(|i| i.trim().parse::<i64>()) {
                    Some(Ok(i)) => {
                        let d = player(lines, span.clone(), i, players)?;
                        SimpleGame::dictator(players, d).map_err(at(span))
                    }
                    _ => lines.err(span, format!("unknown game preset '{other}'")),
                },
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "[net]
horizon = 5

[[sensor]]
states = 2
x0 = 0
pi0 = 0.1
p = 0.9
c = 0.2
pre = [[0.8, 0.2], [0.3, 0.7]]
post = [[0.3, 0.7], [0.1, 0.9]]
";

    fn line_of(text: &str) -> usize {
        match parse_model(text) {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn parses_a_single_sensor() {
        let m = parse_model(BASE).unwrap();
        assert_eq!(m.net.horizon, 5);
        assert_eq!(m.net.size(), 1);
        assert!(m.game.is_none());
        assert_eq!(m.net.sensors[0].pre.prob(1, 1), 0.7);
    }

    #[test]
    fn errors_point_at_the_offending_line() {
        assert_eq!(line_of(&BASE.replace("[0.3, 0.7]]\npost", "[0.3, 0.8]]\npost")), 10);
        assert_eq!(line_of(&BASE.replace("c = 0.2", "c = 0")), 9);
        assert_eq!(line_of(&BASE.replace("pi0 = 0.1", "pi0 = 1.5")), 7);
        assert_eq!(line_of(&BASE.replace("x0 = 0", "x0 = 2")), 6);
        assert_eq!(line_of(&BASE.replace("p = 0.9", "p = 1.0")), 8);
        assert_eq!(line_of(&BASE.replace("c = 0.2", "c = 0.2\nbogus = 1")), 10);
        assert_eq!(line_of(&BASE.replace("horizon = 5", "horizon = -1")), 2);
        assert_eq!(line_of(&BASE.replace("states = 2", "states = 3")), 10);
    }

    #[test]
    fn game_blocks() {
        let two = format!("{BASE}{}", &BASE[BASE.find("[[sensor]]").unwrap()..]);
        let with = |g: &str| format!("{two}\n[game]\n{g}\n");
        assert_eq!(parse_model(&with("preset = \"majority\"")).unwrap().game, Some(SimpleGame::majority(2).unwrap()));
        assert_eq!(
            parse_model(&with("preset = \"dictator:2\"")).unwrap().game,
            Some(SimpleGame::dictator(2, 1).unwrap())
        );
        assert_eq!(
            parse_model(&with("minimal_winning = [[1]]")).unwrap().game,
            Some(SimpleGame::dictator(2, 0).unwrap())
        );
        assert_eq!(
            parse_model(&with("preset = \"threshold\"\nweights = [1, 1]\nquota = 2")).unwrap().game,
            Some(SimpleGame::unanimity(2).unwrap())
        );
        let line = two.lines().count() + 3;
        assert_eq!(line_of(&with("preset = \"dictator:3\"")), line);
        assert_eq!(line_of(&with("preset = \"plurality\"")), line);
        assert_eq!(line_of(&with("minimal_winning = [[]]")), line);
    }
}

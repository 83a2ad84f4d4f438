//! Line-oriented text form of an intervention schedule.
//!
//! ```text
//! # comments run to the end of the line
//! max_log_rate 2
//! clamp young_modulus 1e3 1e9
//! at t=0.5 set object 0 young_modulus 1e3 ramp 0.25
//! at t=1 set object 0 part 2 interior density 0
//! on ground_contact set all material_model liquid
//! on height_below 0.2 set object 1 velocity_impulse (0, 3, 0) repeat
//! on speed_above 4 set all wind (1, 0, 0) ramp 0.5
//! ```

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{
    Clamp, ClampTable, InstructionSchedule, Intervention, ObjectSelector, Property, SceneInfo,
    Selector, Trigger, Value, DEFAULT_MAX_LOG_RATE,
};
use crate::material::MaterialModel;
use crate::{Error, Result};

/// A schedule before it has been checked against a scene.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedSchedule {
    pub interventions: Vec<Intervention>,
    pub clamps: ClampTable,
    pub max_log_rate: f64,
}

#[derive(Clone, Debug)]
struct Token<'a> {
    text: &'a str,
    column: usize,
}

struct Line<'a> {
    number: usize,
    tokens: Vec<Token<'a>>,
    pos: usize,
    end_column: usize,
}

impl<'a> Line<'a> {
    fn error(&self, column: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.number,
            column,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<&Token<'a>> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self, what: &str) -> Result<Token<'a>> {
        match self.tokens.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => Err(self.error(self.end_column, format!("expected {what}"))),
        }
    }

    fn keyword(&mut self, word: &str) -> Result<()> {
        let t = self.next(&format!("`{word}`"))?;
        if t.text != word {
            return Err(self.error(t.column, format!("expected `{word}`, found `{}`", t.text)));
        }
        Ok(())
    }

    fn eat(&mut self, word: &str) -> bool {
        if self.peek().is_some_and(|t| t.text == word) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn number(&mut self, what: &str) -> Result<f64> {
        let t = self.next(what)?;
        parse_number(t.text).ok_or_else(|| self.error(t.column, format!("expected {what}, found `{}`", t.text)))
    }

    fn integer(&mut self, what: &str) -> Result<u32> {
        let t = self.next(what)?;
        t.text
            .parse()
            .map_err(|_| self.error(t.column, format!("expected {what}, found `{}`", t.text)))
    }

    fn finish(&self) -> Result<()> {
        match self.peek() {
            Some(t) => Err(self.error(t.column, format!("unexpected `{}`", t.text))),
            None => Ok(()),
        }
    }
}

fn parse_number(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Splits a line into tokens, keeping a parenthesised vector as one token.
fn tokenize(number: usize, raw: &str) -> Result<Line<'_>> {
    let text = raw.split('#').next().unwrap_or("");
    let mut tokens = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if bytes[i] == b'(' {
            while i < bytes.len() && bytes[i] != b')' {
                i += 1;
            }
            if i == bytes.len() {
                return Err(Error::Parse {
                    line: number,
                    column: start + 1,
                    message: "unclosed `(`".into(),
                });
            }
            i += 1;
        } else {
            while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'(' {
                i += 1;
            }
        }
        tokens.push(Token {
            text: &text[start..i],
            column: start + 1,
        });
    }
    Ok(Line {
        number,
        tokens,
        pos: 0,
        end_column: text.trim_end().len() + 1,
    })
}

fn parse_vector(line: &Line<'_>, t: &Token<'_>) -> Result<[f64; 3]> {
    let inner = &t.text[1..t.text.len() - 1];
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(line.error(t.column, format!("vectors have three components, found {}", parts.len())));
    }
    let mut v = [0.0; 3];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = parse_number(p).ok_or_else(|| line.error(t.column, format!("bad vector component `{p}`")))?;
    }
    Ok(v)
}

fn parse_property(line: &mut Line<'_>) -> Result<Property> {
    let t = line.next("a property name")?;
    Property::from_name(t.text).ok_or_else(|| line.error(t.column, format!("unknown property `{}`", t.text)))
}

fn parse_value(line: &mut Line<'_>, property: Property) -> Result<Value> {
    let t = line.next("a value")?;
    match property {
        Property::MaterialModel => MaterialModel::from_name(t.text)
            .map(Value::Model)
            .ok_or_else(|| line.error(t.column, format!("unknown material model `{}`", t.text))),
        Property::VelocityImpulse | Property::Gravity | Property::Wind => {
            if !t.text.starts_with('(') {
                return Err(line.error(t.column, format!("{property} takes a vector `(x, y, z)`")));
            }
            parse_vector(line, &t).map(Value::Vector)
        }
        _ => parse_number(t.text)
            .map(Value::Scalar)
            .ok_or_else(|| line.error(t.column, format!("expected a number, found `{}`", t.text))),
    }
}

fn parse_selector(line: &mut Line<'_>) -> Result<Selector> {
    let t = line.next("`all` or `object`")?;
    let object = match t.text {
        "all" => ObjectSelector::All,
        "object" => ObjectSelector::Id(line.integer("an object id")?),
        other => return Err(line.error(t.column, format!("expected `all` or `object`, found `{other}`"))),
    };
    let part = if line.eat("part") {
        Some(line.integer("a part label")?)
    } else {
        None
    };
    let interior_only = line.eat("interior");
    Ok(Selector {
        object,
        part,
        interior_only,
    })
}

fn parse_trigger(line: &mut Line<'_>, head: &Token<'_>) -> Result<Trigger> {
    if head.text == "at" {
        let t = line.next("`t=<seconds>`")?;
        let value = t
            .text
            .strip_prefix("t=")
            .and_then(parse_number)
            .ok_or_else(|| line.error(t.column, format!("expected `t=<seconds>`, found `{}`", t.text)))?;
        return Ok(Trigger::AtTime(value));
    }
    let t = line.next("an event name")?;
    match t.text {
        "ground_contact" => Ok(Trigger::OnGroundContact),
        "height_below" => Ok(Trigger::OnHeightBelow(line.number("a height")?)),
        "speed_above" => Ok(Trigger::OnSpeedAbove(line.number("a speed")?)),
        other => Err(line.error(t.column, format!("unknown event `{other}`"))),
    }
}

fn parse_intervention(line: &mut Line<'_>, head: &Token<'_>) -> Result<Intervention> {
    let trigger = parse_trigger(line, head)?;
    line.keyword("set")?;
    let target = parse_selector(line)?;
    let property = parse_property(line)?;
    let value = parse_value(line, property)?;
    let mut ramp_duration = 0.0;
    let mut one_shot = true;
    while let Some(t) = line.peek().cloned() {
        match t.text {
            "ramp" => {
                line.pos += 1;
                ramp_duration = line.number("a ramp duration")?;
            }
            "one_shot" => {
                line.pos += 1;
                one_shot = true;
            }
            "repeat" => {
                line.pos += 1;
                one_shot = false;
            }
            _ => break,
        }
    }
    line.finish()?;
    Ok(Intervention {
        target,
        property,
        value,
        trigger,
        ramp_duration,
        one_shot,
    })
}

/// Parses schedule text without checking it against a scene.
pub fn parse_schedule(text: &str) -> Result<ParsedSchedule> {
    let mut out = ParsedSchedule {
        interventions: Vec::new(),
        clamps: ClampTable::default(),
        max_log_rate: DEFAULT_MAX_LOG_RATE,
    };
    for (k, raw) in text.lines().enumerate() {
        let mut line = tokenize(k + 1, raw)?;
        let Some(head) = line.peek().cloned() else {
            continue;
        };
        line.pos += 1;
        match head.text {
            "at" | "on" => {
                let iv = parse_intervention(&mut line, &head)?;
                out.interventions.push(iv);
            }
            "clamp" => {
                let pt = line.peek().cloned();
                let property = parse_property(&mut line)?;
                let min = line.number("a lower bound")?;
                let max = line.number("an upper bound")?;
                line.finish()?;
                out.clamps.set(property, Clamp { min, max }).map_err(|e| {
                    line.error(pt.map_or(head.column, |t| t.column), e.to_string())
                })?;
            }
            "max_log_rate" => {
                out.max_log_rate = line.number("a rate in decades per second")?;
                line.finish()?;
            }
            other => {
                return Err(line.error(head.column, format!("unknown statement `{other}`")));
            }
        }
    }
    Ok(out)
}

/// Parses and validates schedule text against the objects of a scene.
pub fn compile_schedule(text: &str, scene: &SceneInfo) -> Result<InstructionSchedule> {
    let parsed = parse_schedule(text)?;
    InstructionSchedule::new(parsed.interventions, parsed.clamps, parsed.max_log_rate, scene)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::ObjectInfo;

    fn scene() -> SceneInfo {
        SceneInfo {
            objects: alloc::vec![ObjectInfo { id: 0, parts: alloc::vec![1, 2] }, ObjectInfo { id: 1, parts: alloc::vec![] }],
        }
    }

    #[test]
    fn parses_every_statement() {
        let text = "\
# header
max_log_rate 3
clamp density 10 5000
at t=0.5 set object 0 young_modulus 1e3 ramp 0.25
at t=1 set object 0 part 2 interior density 0
on ground_contact set all material_model liquid
on height_below 0.2 set object 1 velocity_impulse (0, 3, -1.5) repeat
on speed_above 4 set all wind (1, 0, 0) ramp 0.5 # trailing
";
        let s = compile_schedule(text, &scene()).unwrap();
        assert_eq!(s.max_log_rate(), 3.0);
        assert_eq!(s.clamps().density, Clamp { min: 10.0, max: 5000.0 });
        let iv = s.interventions();
        assert_eq!(iv.len(), 5);
        assert_eq!(iv[0].trigger, Trigger::AtTime(0.5));
        assert_eq!(iv[0].ramp_duration, 0.25);
        assert_eq!(iv[1].target.part, Some(2));
        assert!(iv[1].target.interior_only);
        assert_eq!(iv[2].value, Value::Model(MaterialModel::Liquid));
        assert_eq!(iv[3].value, Value::Vector([0.0, 3.0, -1.5]));
        assert!(!iv[3].one_shot);
        assert_eq!(iv[4].trigger, Trigger::OnSpeedAbove(4.0));
    }

    #[test]
    fn errors_carry_positions() {
        let err = parse_schedule("at t=1 set object 0 stiffness 3").unwrap_err();
        assert_eq!(
            err,
            Error::Parse {
                line: 1,
                column: 21,
                message: "unknown property `stiffness`".into()
            }
        );
        let err = parse_schedule("\n\nat t=1 set object 0 gravity (0, 1)").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, column: 29, .. }));
        let err = parse_schedule("at t=1 set object").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, column: 18, .. }));
        assert!(matches!(parse_schedule("bogus"), Err(Error::Parse { column: 1, .. })));
        assert!(matches!(parse_schedule("at t=1 set all density 5 extra"), Err(Error::Parse { column: 26, .. })));
    }

    #[test]
    fn scene_errors_surface() {
        let err = compile_schedule("at t=0 set object 4 density 100", &scene()).unwrap_err();
        assert!(matches!(err, Error::UnknownTarget(_)));
        let err = compile_schedule("at t=0 set object 0 part 7 density 100", &scene()).unwrap_err();
        assert!(matches!(err, Error::UnknownTarget(_)));
        let err = compile_schedule("at t=0 set all poisson_ratio 0.7", &scene()).unwrap_err();
        assert_eq!(err.code(), "E_CLAMP");
    }
}

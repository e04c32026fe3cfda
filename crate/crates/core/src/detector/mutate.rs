use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ast::{BinOp, Expr, ObjFilter, Prim, Ty};
use super::{parse_detector, DetectorProgram};
use crate::trace::{Color, BUILTIN_UIDS, COLLISION_END, COLLISION_START};

/// Relative threshold offsets; a jittered constant `c` becomes
/// `c + f * max(|c|, 1)` for `f` drawn from this table.
pub const JITTER_TABLE: [f64; 8] = [-0.5, -0.25, -0.1, -0.05, 0.05, 0.1, 0.25, 0.5];

const MAX_DEPTH: usize = 3;
const ATTEMPTS: usize = 16;

struct Site {
    path: Vec<usize>,
    ty: Ty,
    scope: Vec<String>,
}

/// Every node of `body` except the leading exists chain (which fixes the
/// variables an EMIT clause can see) and string literals.
fn sites(body: &Expr) -> Vec<Site> {
    fn walk(
        e: &Expr,
        path: &mut Vec<usize>,
        scope: &mut Vec<String>,
        in_chain: bool,
        out: &mut Vec<Site>,
    ) {
        let chain_link = in_chain && matches!(e, Expr::Quant { all: false, .. });
        if !chain_link && e.ty() != Ty::Str {
            out.push(Site {
                path: path.clone(),
                ty: e.ty(),
                scope: scope.clone(),
            });
        }
        let bound = if let Expr::Quant { var, .. } = e {
            scope.push(var.clone());
            true
        } else {
            false
        };
        for (k, c) in e.children().into_iter().enumerate() {
            path.push(k);
            walk(c, path, scope, chain_link, out);
            path.pop();
        }
        if bound {
            scope.pop();
        }
    }
    let mut out = Vec::new();
    walk(body, &mut Vec::new(), &mut Vec::new(), true, &mut out);
    out
}

fn node<'a>(e: &'a Expr, path: &[usize]) -> &'a Expr {
    path.iter().fold(e, |n, &k| n.children()[k])
}

fn node_mut<'a>(e: &'a mut Expr, path: &[usize]) -> &'a mut Expr {
    let mut n = e;
    for &k in path {
        n = n.children_mut().into_iter().nth(k).expect("valid path");
    }
    n
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

struct Gen<'a> {
    rng: &'a mut ChaCha8Rng,
    uids: &'a [String],
    fresh: usize,
}

impl Gen<'_> {
    fn threshold(&mut self) -> f64 {
        const CONSTS: [f64; 10] = [0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 128.0];
        *CONSTS.choose(self.rng).unwrap()
    }

    fn obj(&mut self, scope: &[String]) -> Expr {
        if !scope.is_empty() && self.rng.gen_bool(0.8) {
            let k = self.rng.gen_range(0..scope.len());
            Expr::Var {
                name: scope[k].clone(),
                slot: k,
            }
        } else {
            let c = Color::ALL.choose(self.rng).unwrap();
            Expr::Call(Prim::Object, vec![Expr::Str(c.to_string())])
        }
    }

    fn num(&mut self, depth: usize, scope: &[String]) -> Expr {
        if depth == 0 {
            return if self.rng.gen_bool(0.7) {
                Expr::Num(self.threshold())
            } else {
                Expr::Call(Prim::Time, vec![])
            };
        }
        match self.rng.gen_range(0..9) {
            0 => Expr::Call(Prim::Speed, vec![self.obj(scope)]),
            1 => Expr::Call(Prim::VelX, vec![self.obj(scope)]),
            2 => Expr::Call(Prim::VelY, vec![self.obj(scope)]),
            3 => Expr::Call(Prim::PosX, vec![self.obj(scope)]),
            4 => Expr::Call(Prim::PosY, vec![self.obj(scope)]),
            5 => Expr::Call(Prim::Distance, vec![self.obj(scope), self.obj(scope)]),
            6 => Expr::Call(Prim::Delta, vec![self.num(depth - 1, scope)]),
            7 => Expr::Call(Prim::Abs, vec![self.num(depth - 1, scope)]),
            _ => Expr::Call(Prim::Contacts, vec![self.obj(scope)]),
        }
    }

    fn event(&mut self, scope: &[String]) -> Expr {
        let uid = self
            .uids
            .choose(self.rng)
            .cloned()
            .unwrap_or_else(|| COLLISION_START.to_string());
        if scope.is_empty() {
            return Expr::EventActive {
                uid,
                filter: vec![],
            };
        }
        if uid == COLLISION_START || uid == COLLISION_END {
            let key = if self.rng.gen_bool(0.5) {
                "a_id"
            } else {
                "b_id"
            };
            Expr::EventActive {
                uid,
                filter: vec![(key.to_string(), self.obj(scope))],
            }
        } else {
            Expr::EventInvolves {
                uid,
                obj: Box::new(self.obj(scope)),
            }
        }
    }

    fn bool(&mut self, depth: usize, scope: &[String]) -> Expr {
        if depth == 0 {
            return match self.rng.gen_range(0..3) {
                0 if !scope.is_empty() => Expr::Call(Prim::IsStatic, vec![self.obj(scope)]),
                1 => self.event(scope),
                _ => Expr::Bool(self.rng.gen_bool(0.5)),
            };
        }
        match self.rng.gen_range(0..10) {
            0..=2 => {
                let ops = [BinOp::Lt, BinOp::Le, BinOp::Gt, BinOp::Ge];
                let op = *ops.choose(self.rng).unwrap();
                let lhs = self.num(depth - 1, scope);
                Expr::Bin(op, Box::new(lhs), Box::new(Expr::Num(self.threshold())))
            }
            3 => Expr::Call(Prim::Contact, vec![self.obj(scope), self.obj(scope)]),
            4 => self.event(scope),
            5 => Expr::Call(Prim::RisingEdge, vec![self.bool(depth - 1, scope)]),
            6 => Expr::Call(
                Prim::Sustained,
                vec![
                    self.bool(depth - 1, scope),
                    Expr::Num(*[0.02, 0.05, 0.1].choose(self.rng).unwrap()),
                ],
            ),
            7 => {
                let op = if self.rng.gen_bool(0.5) {
                    BinOp::And
                } else {
                    BinOp::Or
                };
                Expr::Bin(
                    op,
                    Box::new(self.bool(depth - 1, scope)),
                    Box::new(self.bool(depth - 1, scope)),
                )
            }
            8 => Expr::Not(Box::new(self.bool(depth - 1, scope))),
            _ => {
                let mut var;
                loop {
                    var = format!("v{}", self.fresh);
                    self.fresh += 1;
                    if !scope.contains(&var) {
                        break;
                    }
                }
                let filters = [
                    "dynamic", "static", "boundary", "any", "red", "green", "blue", "black",
                ];
                let filter = ObjFilter::parse(filters.choose(self.rng).unwrap()).unwrap();
                let mut inner = scope.to_vec();
                inner.push(var.clone());
                let body = self.bool(depth - 1, &inner);
                Expr::Quant {
                    all: self.rng.gen_bool(0.3),
                    var,
                    slot: scope.len(),
                    filter,
                    body: Box::new(body),
                }
            }
        }
    }

    fn of(&mut self, ty: Ty, depth: usize, scope: &[String]) -> Expr {
        match ty {
            Ty::Bool => self.bool(depth, scope),
            Ty::Num => self.num(depth, scope),
            Ty::Obj => self.obj(scope),
            Ty::Vec => {
                if self.rng.gen_bool(0.5) {
                    Expr::Call(Prim::Position, vec![self.obj(scope)])
                } else {
                    Expr::Call(Prim::GridCell, vec![self.obj(scope), Expr::Num(10.0)])
                }
            }
            Ty::Str => Expr::Str(Color::Green.to_string()),
        }
    }
}

pub(super) fn jitter(body: &mut Expr, rng: &mut ChaCha8Rng) -> bool {
    let nums: Vec<Vec<usize>> = sites(body)
        .into_iter()
        .filter(|s| matches!(node(body, &s.path), Expr::Num(_)))
        .map(|s| s.path)
        .collect();
    let Some(path) = nums.choose(rng) else {
        return false;
    };
    let f = *JITTER_TABLE.choose(rng).unwrap();
    if let Expr::Num(x) = node_mut(body, path) {
        *x = round4(*x + f * x.abs().max(1.0));
    }
    true
}

fn replace(body: &mut Expr, rng: &mut ChaCha8Rng, uids: &[String]) -> bool {
    let ss = sites(body);
    let Some(site) = ss.choose(rng) else {
        return false;
    };
    let depth = rng.gen_range(0..=MAX_DEPTH);
    let mut gen = Gen {
        rng,
        uids,
        fresh: 0,
    };
    let new = gen.of(site.ty, depth, &site.scope);
    *node_mut(body, &site.path) = new;
    true
}

fn crossover(body: &mut Expr, donor: &Expr, rng: &mut ChaCha8Rng) -> bool {
    let ss = sites(body);
    let Some(site) = ss.choose(rng) else {
        return false;
    };
    let candidates: Vec<Expr> = sites(donor)
        .into_iter()
        .filter(|d| d.ty == site.ty)
        .map(|d| node(donor, &d.path).clone())
        .filter(|e| e.free_vars().is_empty() || !site.scope.is_empty())
        .collect();
    let Some(piece) = candidates.choose(rng) else {
        return false;
    };
    let mut piece = piece.clone();
    // rebind the donor's free variables onto variables in scope at the target
    let free: Vec<String> = piece.free_vars().into_iter().collect();
    let temps: Vec<String> = (0..free.len()).map(|k| format!("__x{k}")).collect();
    for (f, t) in free.iter().zip(&temps) {
        piece.rename_free(f, t);
    }
    for t in &temps {
        let to = site.scope.choose(rng).unwrap();
        piece.rename_free(t, to);
    }
    *node_mut(body, &site.path) = piece;
    true
}

/// Produces a new detector source from parent programs by threshold jitter,
/// typed subtree replacement or crossover. The result always parses and is
/// a pure function of the parents and the seed.
pub fn grammar_mutate(parents: &[DetectorProgram], seed: u64) -> String {
    let Some(first) = parents.first() else {
        return "DETECT empty WHERE false".to_string();
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uids: Vec<String> = BUILTIN_UIDS.iter().map(|s| s.to_string()).collect();
    for p in parents {
        for u in &p.depends_on {
            if !uids.contains(u) {
                uids.push(u.clone());
            }
        }
    }
    for _ in 0..ATTEMPTS {
        let base = parents.choose(&mut rng).unwrap();
        let mut child = base.clone();
        let op = rng.gen_range(0..10);
        let changed = match op {
            0..=3 => jitter(&mut child.body, &mut rng),
            4..=6 if parents.len() > 1 => {
                let donor = parents.choose(&mut rng).unwrap();
                crossover(&mut child.body, &donor.body, &mut rng)
            }
            _ => replace(&mut child.body, &mut rng, &uids),
        };
        if !changed {
            continue;
        }
        let mut scope = Vec::new();
        if child.body.resolve_slots(&mut scope).is_err() {
            continue;
        }
        let src = child.to_string();
        if parse_detector(&src).is_ok() && src != base.to_string() {
            return src;
        }
    }
    first.to_string()
}

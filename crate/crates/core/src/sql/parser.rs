// Copyright 2026 The Skylite Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Recursive-descent parser for the supported SELECT grammar.

use super::ast::*;
use super::lexer::{tokenize, Spanned, Token};
use super::SqlError;

const RESERVED: &[&str] = &[
    "select", "from", "where", "group", "by", "order", "limit", "as", "and", "or", "not",
    "between", "in", "is", "null", "case", "when", "then", "else", "end", "join", "inner", "on",
    "asc", "desc", "date", "interval", "true", "false", "having", "distinct", "cross", "left",
    "right", "full", "outer", "union", "exists",
];

pub fn parse(sql: &str) -> Result<Query, SqlError> {
    let mut p = Parser {
        tokens: tokenize(sql)?,
        pos: 0,
    };
    let q = p.query()?;
    p.eat(&Token::Semicolon);
    p.expect_eof()?;
    Ok(q)
}

/// Parses a standalone expression (used by tests and tooling).
pub fn parse_expr(sql: &str) -> Result<Expr, SqlError> {
    let mut p = Parser {
        tokens: tokenize(sql)?,
        pos: 0,
    };
    let e = p.expr()?;
    p.expect_eof()?;
    Ok(e)
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos].token
    }

    fn peek_at(&self, n: usize) -> &Token {
        let i = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[i].token
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].offset
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].token.clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, t: &Token) -> bool {
        if self.peek() == t {
            self.advance();
            true
        } else {
            false
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Token::Word(w) if w == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, SqlError> {
        Err(SqlError::syntax(self.offset(), msg))
    }

    fn expect(&mut self, t: &Token, what: &str) -> Result<(), SqlError> {
        if self.eat(t) {
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SqlError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.err(format!("expected {}", kw.to_uppercase()))
        }
    }

    fn expect_eof(&self) -> Result<(), SqlError> {
        if *self.peek() == Token::Eof {
            Ok(())
        } else {
            self.err("unexpected trailing input")
        }
    }

    fn identifier(&mut self) -> Result<String, SqlError> {
        match self.peek().clone() {
            Token::Word(w) if !RESERVED.contains(&w.as_str()) => {
                self.advance();
                Ok(w)
            }
            _ => self.err("expected identifier"),
        }
    }

    fn optional_alias(&mut self) -> Result<Option<String>, SqlError> {
        if self.eat_kw("as") {
            return self.identifier().map(Some);
        }
        match self.peek() {
            Token::Word(w) if !RESERVED.contains(&w.as_str()) => self.identifier().map(Some),
            _ => Ok(None),
        }
    }

    fn query(&mut self) -> Result<Query, SqlError> {
        self.expect_kw("select")?;
        if self.is_kw("distinct") {
            return Err(SqlError::NotSupported("SELECT DISTINCT".into()));
        }
        let mut q = Query::default();
        loop {
            if self.eat(&Token::Star) {
                q.select.push(SelectItem::Wildcard);
            } else {
                let expr = self.expr()?;
                let alias = self.optional_alias()?;
                q.select.push(SelectItem::Expr { expr, alias });
            }
            if !self.eat(&Token::Comma) {
                break;
            }
        }
        if self.eat_kw("from") {
            loop {
                q.from.push(self.from_item()?);
                if !self.eat(&Token::Comma) {
                    break;
                }
            }
        }
        if self.eat_kw("where") {
            q.selection = Some(self.expr()?);
        }
        if self.eat_kw("group") {
            self.expect_kw("by")?;
            loop {
                q.group_by.push(self.expr()?);
                if !self.eat(&Token::Comma) {
                    break;
                }
            }
        }
        if self.is_kw("having") {
            return Err(SqlError::NotSupported("HAVING".into()));
        }
        if self.eat_kw("order") {
            self.expect_kw("by")?;
            loop {
                let expr = self.expr()?;
                let asc = if self.eat_kw("desc") {
                    false
                } else {
                    self.eat_kw("asc");
                    true
                };
                q.order_by.push(OrderByItem { expr, asc });
                if !self.eat(&Token::Comma) {
                    break;
                }
            }
        }
        if self.eat_kw("limit") {
            match self.advance() {
                Token::Number(n) if n.bytes().all(|b| b.is_ascii_digit()) => {
                    q.limit = Some(n.parse().map_err(|_| SqlError::syntax(self.offset(), "limit too large"))?)
                }
                _ => return Err(SqlError::syntax(self.tokens[self.pos - 1].offset, "expected integer limit")),
            }
        }
        Ok(q)
    }

    fn table_ref(&mut self) -> Result<TableRef, SqlError> {
        if *self.peek() == Token::LParen {
            return Err(SqlError::NotSupported("derived tables".into()));
        }
        let name = self.identifier()?;
        let alias = self.optional_alias()?;
        Ok(TableRef { name, alias })
    }

    fn from_item(&mut self) -> Result<FromItem, SqlError> {
        let table = self.table_ref()?;
        let mut joins = Vec::new();
        loop {
            if ["left", "right", "full", "cross"].iter().any(|k| self.is_kw(k)) {
                return Err(SqlError::NotSupported("only inner joins are supported".into()));
            }
            let inner = self.eat_kw("inner");
            if !self.eat_kw("join") {
                if inner {
                    return self.err("expected JOIN");
                }
                break;
            }
            let t = self.table_ref()?;
            self.expect_kw("on")?;
            let on = self.expr()?;
            joins.push(Join { table: t, on });
        }
        Ok(FromItem { table, joins })
    }

    pub fn expr(&mut self) -> Result<Expr, SqlError> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<Expr, SqlError> {
        let mut e = self.and_expr()?;
        while self.eat_kw("or") {
            e = Expr::binary(BinaryOp::Or, e, self.and_expr()?);
        }
        Ok(e)
    }

    fn and_expr(&mut self) -> Result<Expr, SqlError> {
        let mut e = self.not_expr()?;
        while self.eat_kw("and") {
            e = Expr::binary(BinaryOp::And, e, self.not_expr()?);
        }
        Ok(e)
    }

    fn not_expr(&mut self) -> Result<Expr, SqlError> {
        if self.eat_kw("not") {
            return Ok(Expr::Unary {
                op: UnaryOp::Not,
                expr: Box::new(self.not_expr()?),
            });
        }
        self.predicate()
    }

    fn predicate(&mut self) -> Result<Expr, SqlError> {
        let left = self.additive()?;
        let op = match self.peek() {
            Token::Eq => Some(BinaryOp::Eq),
            Token::NotEq => Some(BinaryOp::NotEq),
            Token::Lt => Some(BinaryOp::Lt),
            Token::LtEq => Some(BinaryOp::LtEq),
            Token::Gt => Some(BinaryOp::Gt),
            Token::GtEq => Some(BinaryOp::GtEq),
            _ => None,
        };
        if let Some(op) = op {
            self.advance();
            let right = self.additive()?;
            return Ok(Expr::binary(op, left, right));
        }
        if self.eat_kw("is") {
            let negated = self.eat_kw("not");
            self.expect_kw("null")?;
            return Ok(Expr::IsNull {
                expr: Box::new(left),
                negated,
            });
        }
        let negated = matches!(self.peek(), Token::Word(w) if w == "not")
            && matches!(self.peek_at(1), Token::Word(w) if w == "between" || w == "in");
        if negated {
            self.advance();
        }
        if self.eat_kw("between") {
            let low = self.additive()?;
            self.expect_kw("and")?;
            let high = self.additive()?;
            return Ok(Expr::Between {
                expr: Box::new(left),
                negated,
                low: Box::new(low),
                high: Box::new(high),
            });
        }
        if self.eat_kw("in") {
            self.expect(&Token::LParen, "(")?;
            if self.is_kw("select") {
                return Err(SqlError::NotSupported("subqueries".into()));
            }
            let mut list = Vec::new();
            loop {
                list.push(self.expr()?);
                if !self.eat(&Token::Comma) {
                    break;
                }
            }
            self.expect(&Token::RParen, ")")?;
            return Ok(Expr::InList {
                expr: Box::new(left),
                negated,
                list,
            });
        }
        Ok(left)
    }

    fn additive(&mut self) -> Result<Expr, SqlError> {
        let mut e = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Token::Plus => BinaryOp::Plus,
                Token::Minus => BinaryOp::Minus,
                _ => return Ok(e),
            };
            self.advance();
            e = Expr::binary(op, e, self.multiplicative()?);
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, SqlError> {
        let mut e = self.unary()?;
        loop {
            let op = match self.peek() {
                Token::Star => BinaryOp::Multiply,
                Token::Slash => BinaryOp::Divide,
                _ => return Ok(e),
            };
            self.advance();
            e = Expr::binary(op, e, self.unary()?);
        }
    }

    fn unary(&mut self) -> Result<Expr, SqlError> {
        if self.eat(&Token::Minus) {
            return Ok(Expr::Unary {
                op: UnaryOp::Minus,
                expr: Box::new(self.unary()?),
            });
        }
        if self.eat(&Token::Plus) {
            return self.unary();
        }
        self.primary()
    }

    fn string_literal(&mut self) -> Result<String, SqlError> {
        match self.advance() {
            Token::String(s) => Ok(s),
            _ => Err(SqlError::syntax(self.tokens[self.pos.saturating_sub(1)].offset, "expected string literal")),
        }
    }

    fn primary(&mut self) -> Result<Expr, SqlError> {
        let tok = self.peek().clone();
        match tok {
            Token::Number(n) => {
                self.advance();
                Ok(Expr::Literal(Literal::Number(n)))
            }
            Token::String(s) => {
                self.advance();
                Ok(Expr::Literal(Literal::String(s)))
            }
            Token::LParen => {
                self.advance();
                if self.is_kw("select") {
                    return Err(SqlError::NotSupported("subqueries".into()));
                }
                let e = self.expr()?;
                self.expect(&Token::RParen, ")")?;
                Ok(e)
            }
            Token::Word(w) => match w.as_str() {
                "date" => {
                    self.advance();
                    Ok(Expr::Literal(Literal::Date(self.string_literal()?)))
                }
                "interval" => {
                    self.advance();
                    let value = self.string_literal()?;
                    let unit = match self.peek() {
                        Token::Word(u) if u == "year" || u == "years" => IntervalUnit::Year,
                        Token::Word(u) if u == "month" || u == "months" => IntervalUnit::Month,
                        Token::Word(u) if u == "day" || u == "days" => IntervalUnit::Day,
                        _ => return self.err("expected interval unit"),
                    };
                    self.advance();
                    let mut precision = None;
                    if *self.peek() == Token::LParen {
                        self.advance();
                        match self.advance() {
                            Token::Number(n) if n.bytes().all(|b| b.is_ascii_digit()) => {
                                precision = n.parse().ok()
                            }
                            _ => return self.err("expected interval precision"),
                        }
                        self.expect(&Token::RParen, ")")?;
                    }
                    Ok(Expr::Literal(Literal::Interval {
                        value,
                        unit,
                        precision,
                    }))
                }
                "true" | "false" => {
                    self.advance();
                    Ok(Expr::Literal(Literal::Boolean(w == "true")))
                }
                "null" => {
                    self.advance();
                    Ok(Expr::Literal(Literal::Null))
                }
                "case" => {
                    self.advance();
                    self.case_expr()
                }
                "exists" => Err(SqlError::NotSupported("subqueries".into())),
                _ if RESERVED.contains(&w.as_str()) => self.err(format!("unexpected keyword {}", w.to_uppercase())),
                _ => {
                    self.advance();
                    if *self.peek() == Token::LParen {
                        self.advance();
                        return self.function(w);
                    }
                    if self.eat(&Token::Dot) {
                        let name = self.identifier()?;
                        return Ok(Expr::Column {
                            table: Some(w),
                            name,
                        });
                    }
                    Ok(Expr::Column { table: None, name: w })
                }
            },
            Token::Eof => self.err("unexpected end of input"),
            _ => self.err("expected expression"),
        }
    }

    fn function(&mut self, name: String) -> Result<Expr, SqlError> {
        if self.is_kw("distinct") {
            return Err(SqlError::NotSupported("DISTINCT aggregates".into()));
        }
        if self.eat(&Token::Star) {
            self.expect(&Token::RParen, ")")?;
            return Ok(Expr::Function {
                name,
                args: vec![],
                star: true,
            });
        }
        let mut args = Vec::new();
        if !self.eat(&Token::RParen) {
            loop {
                args.push(self.expr()?);
                if !self.eat(&Token::Comma) {
                    break;
                }
            }
            self.expect(&Token::RParen, ")")?;
        }
        Ok(Expr::Function {
            name,
            args,
            star: false,
        })
    }

    fn case_expr(&mut self) -> Result<Expr, SqlError> {
        let operand = if self.is_kw("when") {
            None
        } else {
            Some(Box::new(self.expr()?))
        };
        let mut whens = Vec::new();
        while self.eat_kw("when") {
            let w = self.expr()?;
            self.expect_kw("then")?;
            let t = self.expr()?;
            whens.push((w, t));
        }
        if whens.is_empty() {
            return self.err("expected WHEN");
        }
        let else_expr = if self.eat_kw("else") {
            Some(Box::new(self.expr()?))
        } else {
            None
        };
        self.expect_kw("end")?;
        Ok(Expr::Case {
            operand,
            whens,
            else_expr,
        })
    }
}

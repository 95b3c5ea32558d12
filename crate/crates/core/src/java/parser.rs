use std::fmt;

use super::lexer::{tokenize, Token, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Modifiers {
    pub keywords: Vec<String>,
    pub annotations: Vec<String>,
}

impl Modifiers {
    pub fn has(&self, keyword: &str) -> bool {
        self.keywords.iter().any(|k| k == keyword)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TypeKind {
    Class,
    Interface,
    Enum,
    Record,
    Annotation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub type_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodDecl {
    pub name: String,
    pub modifiers: Modifiers,
    pub type_parameters: Option<String>,
    pub return_type: String,
    pub parameters: Vec<Param>,
    pub throws: Vec<String>,
    /// Verbatim body including braces; `None` for abstract and interface methods.
    pub body: Option<String>,
    /// Line of the first token of the declaration (annotations included).
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeDecl {
    pub kind: TypeKind,
    pub name: String,
    pub modifiers: Modifiers,
    pub line: u32,
    pub methods: Vec<MethodDecl>,
    pub nested: Vec<TypeDecl>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompilationUnit {
    pub package: Option<String>,
    pub imports: Vec<String>,
    pub types: Vec<TypeDecl>,
}

const RESERVED: &[&str] = &[
    "abstract",
    "assert",
    "boolean",
    "break",
    "byte",
    "case",
    "catch",
    "char",
    "class",
    "const",
    "continue",
    "default",
    "do",
    "double",
    "else",
    "enum",
    "extends",
    "final",
    "finally",
    "float",
    "for",
    "goto",
    "if",
    "implements",
    "import",
    "instanceof",
    "int",
    "interface",
    "long",
    "native",
    "new",
    "package",
    "private",
    "protected",
    "public",
    "return",
    "short",
    "static",
    "strictfp",
    "super",
    "switch",
    "synchronized",
    "this",
    "throw",
    "throws",
    "transient",
    "try",
    "void",
    "volatile",
    "while",
    "true",
    "false",
    "null",
];

const PRIMITIVES: &[&str] = &[
    "boolean", "byte", "char", "short", "int", "long", "float", "double", "void",
];

const MODIFIER_KEYWORDS: &[&str] = &[
    "public",
    "protected",
    "private",
    "static",
    "final",
    "abstract",
    "native",
    "synchronized",
    "transient",
    "volatile",
    "strictfp",
    "default",
    "sealed",
];

/// Reserved words, including the literals `true`, `false` and `null`.
pub fn is_reserved(word: &str) -> bool {
    RESERVED.contains(&word)
}

/// Parses a complete compilation unit. At least one type declaration is required.
pub fn parse_compilation_unit(src: &str) -> Result<CompilationUnit, ParseError> {
    let tokens = tokenize(src).map_err(|e| ParseError {
        line: e.line,
        col: e.col,
        message: e.message,
    })?;
    let mut p = Parser {
        src,
        toks: tokens,
        pos: 0,
    };
    p.compilation_unit()
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Token<'a>>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl<'a> Parser<'a> {
    fn peek_n(&self, n: usize) -> Option<&Token<'a>> {
        self.toks.get(self.pos + n)
    }

    fn text_at(&self, n: usize) -> Option<&'a str> {
        self.peek_n(n)
            .filter(|t| t.kind != TokenKind::Literal)
            .map(|t| t.text)
    }

    fn is(&self, s: &str) -> bool {
        self.text_at(0) == Some(s)
    }

    fn is_at(&self, n: usize, s: &str) -> bool {
        self.text_at(n) == Some(s)
    }

    fn at_eof(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn bump(&mut self) -> Option<Token<'a>> {
        let t = self.toks.get(self.pos).copied();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, s: &str) -> bool {
        if self.is(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        let message = message.into();
        match self.toks.get(self.pos) {
            Some(t) => ParseError {
                line: t.line,
                col: t.col,
                message: format!("{message}, found {:?}", t.text),
            },
            None => {
                let line = self.src.lines().count().max(1) as u32;
                let col = self.src.lines().last().map_or(0, |l| l.chars().count()) as u32 + 1;
                ParseError {
                    line,
                    col,
                    message: format!("{message}, found end of input"),
                }
            }
        }
    }

    fn expect(&mut self, s: &str) -> PResult<Token<'a>> {
        if self.is(s) {
            Ok(self.bump().unwrap())
        } else {
            Err(self.error(format!("expected {s:?}")))
        }
    }

    fn is_ident_at(&self, n: usize) -> bool {
        self.peek_n(n)
            .is_some_and(|t| t.kind == TokenKind::Word && !RESERVED.contains(&t.text))
    }

    fn expect_ident(&mut self) -> PResult<&'a str> {
        if self.is_ident_at(0) {
            Ok(self.bump().unwrap().text)
        } else {
            Err(self.error("expected identifier"))
        }
    }

    /// Joins the tokens in `[from, to)` with normalized spacing.
    fn render(&self, from: usize, to: usize) -> String {
        let mut out = String::new();
        let mut prev: Option<&Token<'a>> = None;
        for t in &self.toks[from..to] {
            if let Some(p) = prev {
                let wordish = |t: &Token<'_>| t.kind != TokenKind::Punct;
                let space = (wordish(p) && wordish(t))
                    || p.text == ","
                    || p.text == "&"
                    || t.text == "&"
                    || (p.text == "?" && wordish(t));
                if space {
                    out.push(' ');
                }
            }
            out.push_str(t.text);
            prev = Some(t);
        }
        out
    }

    fn qualified_name(&mut self) -> PResult<String> {
        let mut name = self.expect_ident()?.to_string();
        while self.is(".") && self.is_ident_at(1) {
            self.bump();
            name.push('.');
            name.push_str(self.bump().unwrap().text);
        }
        Ok(name)
    }

    fn compilation_unit(&mut self) -> PResult<CompilationUnit> {
        let mut pending = Some(self.modifiers()?);
        let mut package = None;
        if self.is("package") {
            if pending.as_ref().is_some_and(|m| !m.keywords.is_empty()) {
                return Err(self.error("modifiers are not allowed on a package declaration"));
            }
            self.bump();
            package = Some(self.qualified_name()?);
            self.expect(";")?;
            pending = None;
        }
        let mut imports = Vec::new();
        if pending.as_ref().is_none_or(|m| m == &Modifiers::default()) {
            while self.is("import") {
                self.bump();
                let is_static = self.eat("static");
                let mut name = self.qualified_name()?;
                if self.eat(".") {
                    self.expect("*")?;
                    name.push_str(".*");
                }
                self.expect(";")?;
                imports.push(if is_static {
                    format!("static {name}")
                } else {
                    name
                });
            }
        }
        if self.is("open") && self.is_at(1, "module") || self.is("module") {
            self.eat("open");
            self.bump();
            self.qualified_name()?;
            self.block()?;
            if !self.at_eof() {
                return Err(self.error("unexpected content after module declaration"));
            }
            return Ok(CompilationUnit {
                package,
                imports,
                types: vec![],
            });
        }
        if pending.as_ref() == Some(&Modifiers::default()) {
            pending = None;
        }
        let mut types = Vec::new();
        loop {
            if pending.is_none() {
                while self.eat(";") {}
                if self.at_eof() {
                    break;
                }
            }
            let start = self.pos;
            let mods = match pending.take() {
                Some(m) => m,
                None => self.modifiers()?,
            };
            let line = self.toks.get(start).map_or(1, |t| t.line);
            if !self.at_type_keyword() {
                return Err(self.error("expected class, interface, enum or record declaration"));
            }
            types.push(self.type_decl(mods, line)?);
        }
        if types.is_empty() {
            return Err(self.error("expected a type declaration"));
        }
        Ok(CompilationUnit {
            package,
            imports,
            types,
        })
    }

    fn annotation(&mut self) -> PResult<String> {
        let start = self.pos;
        self.expect("@")?;
        self.qualified_name()?;
        if self.is("(") {
            self.balanced()?;
        }
        Ok(self.render(start, self.pos))
    }

    fn annotations(&mut self) -> PResult<Vec<String>> {
        let mut out = Vec::new();
        while self.is("@") && !self.is_at(1, "interface") {
            out.push(self.annotation()?);
        }
        Ok(out)
    }

    fn modifiers(&mut self) -> PResult<Modifiers> {
        let mut m = Modifiers::default();
        loop {
            if self.is("@") && !self.is_at(1, "interface") {
                m.annotations.push(self.annotation()?);
            } else if self.is("non") && self.is_at(1, "-") && self.is_at(2, "sealed") {
                self.pos += 3;
                m.keywords.push("non-sealed".into());
            } else if let Some(k) = self.text_at(0).filter(|t| MODIFIER_KEYWORDS.contains(t)) {
                // `sealed` is contextual: only a modifier when another declaration part follows
                if k == "sealed"
                    && !self.is_ident_at(1)
                    && !self.is_at(1, "class")
                    && !self.is_at(1, "interface")
                {
                    break;
                }
                self.bump();
                m.keywords.push(k.to_string());
            } else {
                break;
            }
        }
        Ok(m)
    }

    fn at_type_keyword(&self) -> bool {
        self.is("class")
            || self.is("interface")
            || self.is("enum")
            || (self.is("@") && self.is_at(1, "interface"))
            || (self.is("record")
                && self.is_ident_at(1)
                && (self.is_at(2, "(") || self.is_at(2, "<")))
    }

    fn type_decl(&mut self, modifiers: Modifiers, line: u32) -> PResult<TypeDecl> {
        let kind = if self.eat("class") {
            TypeKind::Class
        } else if self.eat("interface") {
            TypeKind::Interface
        } else if self.eat("enum") {
            TypeKind::Enum
        } else if self.eat("record") {
            TypeKind::Record
        } else {
            self.expect("@")?;
            self.expect("interface")?;
            TypeKind::Annotation
        };
        let name = self.expect_ident()?.to_string();
        match kind {
            TypeKind::Class => {
                if self.is("<") {
                    self.type_parameters()?;
                }
                if self.eat("extends") {
                    self.ty()?;
                }
                if self.eat("implements") {
                    self.type_list()?;
                }
                if self.eat("permits") {
                    self.type_list()?;
                }
            }
            TypeKind::Interface => {
                if self.is("<") {
                    self.type_parameters()?;
                }
                if self.eat("extends") {
                    self.type_list()?;
                }
                if self.eat("permits") {
                    self.type_list()?;
                }
            }
            TypeKind::Enum => {
                if self.eat("implements") {
                    self.type_list()?;
                }
            }
            TypeKind::Record => {
                if self.is("<") {
                    self.type_parameters()?;
                }
                if !self.is("(") {
                    return Err(self.error("expected record components"));
                }
                self.balanced()?;
                if self.eat("implements") {
                    self.type_list()?;
                }
            }
            TypeKind::Annotation => {}
        }
        let mut decl = TypeDecl {
            kind,
            name,
            modifiers,
            line,
            methods: vec![],
            nested: vec![],
        };
        if kind == TypeKind::Enum {
            self.enum_body(&mut decl)?;
        } else {
            self.expect("{")?;
            self.class_body_rest(&mut decl)?;
        }
        Ok(decl)
    }

    fn enum_body(&mut self, decl: &mut TypeDecl) -> PResult<()> {
        self.expect("{")?;
        while !self.is(";") && !self.is("}") {
            self.annotations()?;
            self.expect_ident()?;
            if self.is("(") {
                self.balanced()?;
            }
            if self.is("{") {
                self.block()?;
            }
            if !self.eat(",") {
                break;
            }
        }
        if self.eat(";") {
            self.class_body_rest(decl)
        } else {
            self.expect("}").map(|_| ())
        }
    }

    /// Members up to and including the closing brace.
    fn class_body_rest(&mut self, decl: &mut TypeDecl) -> PResult<()> {
        loop {
            if self.eat("}") {
                return Ok(());
            }
            if self.at_eof() {
                return Err(self.error(format!("unclosed body of {}", decl.name)));
            }
            self.member(decl)?;
        }
    }

    fn member(&mut self, decl: &mut TypeDecl) -> PResult<()> {
        if self.eat(";") {
            return Ok(());
        }
        let start = self.pos;
        let line = self.toks[start].line;
        let modifiers = self.modifiers()?;
        if self.is("{") {
            self.block()?;
            return Ok(());
        }
        if self.at_type_keyword() {
            let nested = self.type_decl(modifiers, line)?;
            decl.nested.push(nested);
            return Ok(());
        }
        let type_parameters = if self.is("<") {
            let s = self.pos;
            self.type_parameters()?;
            Some(self.render(s, self.pos))
        } else {
            None
        };
        if decl.kind == TypeKind::Record && self.is(&decl.name) && self.is_at(1, "{") {
            self.bump();
            self.block()?;
            return Ok(());
        }
        if self.is_ident_at(0) && self.is_at(1, "(") {
            // constructor
            self.bump();
            self.parameters()?;
            if self.eat("throws") {
                self.type_list()?;
            }
            self.block()?;
            return Ok(());
        }
        let ret_start = self.pos;
        self.ty()?;
        let mut return_type = self.render(ret_start, self.pos);
        let name = self.expect_ident()?.to_string();
        if self.is("(") {
            let parameters = self.parameters()?;
            while self.is("[") {
                self.bump();
                self.expect("]")?;
                return_type.push_str("[]");
            }
            let mut throws = Vec::new();
            if self.eat("throws") {
                throws = self.type_list()?;
            }
            let body = if self.is("{") {
                let (s, e) = self.block()?;
                Some(self.src[s..e].to_string())
            } else {
                if self.eat("default") {
                    self.skip_until_semicolon()?;
                }
                self.expect(";")?;
                None
            };
            decl.methods.push(MethodDecl {
                name,
                modifiers,
                type_parameters,
                return_type,
                parameters,
                throws,
                body,
                line,
            });
            return Ok(());
        }
        if type_parameters.is_some() {
            return Err(self.error("expected '(' after generic method name"));
        }
        // field declarators
        loop {
            self.dims()?;
            if self.eat("=") {
                self.skip_until_semicolon()?;
            }
            if self.eat(",") {
                self.expect_ident()?;
                continue;
            }
            self.expect(";")?;
            return Ok(());
        }
    }

    fn dims(&mut self) -> PResult<usize> {
        let mut n = 0;
        loop {
            self.annotations()?;
            if self.is("[") && self.is_at(1, "]") {
                self.pos += 2;
                n += 1;
            } else {
                return Ok(n);
            }
        }
    }

    fn parameters(&mut self) -> PResult<Vec<Param>> {
        self.expect("(")?;
        let mut params = Vec::new();
        if self.eat(")") {
            return Ok(params);
        }
        loop {
            self.modifiers()?;
            let s = self.pos;
            self.ty()?;
            let mut type_text = self.render(s, self.pos);
            if self.eat("...") {
                type_text.push_str("...");
            }
            // receiver parameter: `Type this` or `Type Outer.this`
            let receiver = if self.is("this") {
                self.bump();
                true
            } else if self.is_ident_at(0) && self.is_at(1, ".") && self.is_at(2, "this") {
                self.pos += 3;
                true
            } else {
                false
            };
            if !receiver {
                let name = self.expect_ident()?.to_string();
                for _ in 0..self.dims()? {
                    type_text.push_str("[]");
                }
                params.push(Param { name, type_text });
            }
            if self.eat(",") {
                continue;
            }
            self.expect(")")?;
            return Ok(params);
        }
    }

    fn type_parameters(&mut self) -> PResult<()> {
        self.expect("<")?;
        loop {
            self.annotations()?;
            self.expect_ident()?;
            if self.eat("extends") {
                self.ty()?;
                while self.eat("&") {
                    self.ty()?;
                }
            }
            if self.eat(",") {
                continue;
            }
            self.expect(">")?;
            return Ok(());
        }
    }

    fn type_list(&mut self) -> PResult<Vec<String>> {
        let mut out = Vec::new();
        loop {
            let s = self.pos;
            self.ty()?;
            out.push(self.render(s, self.pos));
            if !self.eat(",") {
                return Ok(out);
            }
        }
    }

    fn ty(&mut self) -> PResult<()> {
        self.annotations()?;
        if self.text_at(0).is_some_and(|t| PRIMITIVES.contains(&t)) {
            self.bump();
        } else {
            self.expect_ident()?;
            if self.is("<") {
                self.type_arguments()?;
            }
            while self.is(".") && (self.is_ident_at(1) || self.is_at(1, "@")) {
                self.bump();
                self.annotations()?;
                self.expect_ident()?;
                if self.is("<") {
                    self.type_arguments()?;
                }
            }
        }
        self.dims()?;
        Ok(())
    }

    fn type_arguments(&mut self) -> PResult<()> {
        self.expect("<")?;
        if self.eat(">") {
            return Ok(());
        }
        loop {
            self.annotations()?;
            if self.eat("?") {
                if self.eat("extends") || self.eat("super") {
                    self.ty()?;
                }
            } else {
                self.ty()?;
            }
            if self.eat(",") {
                continue;
            }
            self.expect(">")?;
            return Ok(());
        }
    }

    /// Consumes a `{ ... }` block, checking bracket balance. Returns its byte span.
    fn block(&mut self) -> PResult<(usize, usize)> {
        if !self.is("{") {
            return Err(self.error("expected '{'"));
        }
        self.balanced()
    }

    /// Consumes a bracketed group starting at the current opener.
    fn balanced(&mut self) -> PResult<(usize, usize)> {
        let open = self.bump().ok_or_else(|| self.error("expected bracket"))?;
        let mut stack = vec![open];
        while let Some(t) = self.bump() {
            if t.kind != TokenKind::Punct {
                continue;
            }
            match t.text {
                "(" | "[" | "{" => stack.push(t),
                ")" | "]" | "}" => {
                    let top = stack.pop().expect("stack non-empty while scanning");
                    if closer_for(top.text) != t.text {
                        self.pos -= 1;
                        return Err(self.error(format!(
                            "mismatched bracket: {:?} opened at {}:{} closed by",
                            top.text, top.line, top.col
                        )));
                    }
                    if stack.is_empty() {
                        return Ok((open.start, t.end()));
                    }
                }
                _ => {}
            }
        }
        let top = stack.last().unwrap();
        Err(ParseError {
            line: top.line,
            col: top.col,
            message: format!("unclosed {:?}", top.text),
        })
    }

    /// Skips an initializer or default value up to the `;` that ends it.
    fn skip_until_semicolon(&mut self) -> PResult<()> {
        loop {
            match self.text_at(0) {
                None if self.at_eof() => return Err(self.error("expected ';'")),
                Some(";") => return Ok(()),
                Some("(" | "[" | "{") => {
                    self.balanced()?;
                }
                Some(")" | "]" | "}") => return Err(self.error("expected ';'")),
                _ => {
                    self.bump();
                }
            }
        }
    }
}

fn closer_for(open: &str) -> &'static str {
    match open {
        "(" => ")",
        "[" => "]",
        _ => "}",
    }
}

//! Hand-written tokenizer cases with their expected outputs.

use codesearch::codefeat::{
    extract_api_sequence, extract_method_name, split_identifier, tokenize_code, tokenize_text, LanguageProfile,
};
use codesearch::Error;

#[derive(Clone, Copy, Debug)]
pub enum Op {
    Split,
    Text,
    JavaCode,
    SqlCode,
    JavaName,
    SqlName,
    JavaApi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Expect {
    Tokens(&'static [&'static str]),
    NotFound,
    Unsupported,
}

use Expect::*;
use Op::*;

pub const CASES: &[(Op, &str, Expect)] = &[
    (Split, "getFileName", Tokens(&["get", "file", "name"])),
    (Split, "parse_HTTP_Response2", Tokens(&["parse", "http", "response2"])),
    (Split, "sort", Tokens(&["sort"])),
    (Split, "", Tokens(&[])),
    (Split, "HTTPServer", Tokens(&["http", "server"])),
    (Split, "XMLHttpRequest", Tokens(&["xml", "http", "request"])),
    (Split, "snake_case_name", Tokens(&["snake", "case", "name"])),
    (Split, "__init__", Tokens(&["init"])),
    (Split, "SCREAMING_SNAKE", Tokens(&["screaming", "snake"])),
    (Split, "getX", Tokens(&["get", "x"])),
    (Split, "toUTF8String", Tokens(&["to", "utf8", "string"])),
    (Split, "md5Hash", Tokens(&["md5", "hash"])),
    (Split, "IOError", Tokens(&["io", "error"])),
    (Split, "getURLs", Tokens(&["get", "ur", "ls"])),
    (Split, "camelCase123abc", Tokens(&["camel", "case123abc"])),
    (Split, "a.b", Tokens(&["a", "b"])),
    (Text, "How to read a file?", Tokens(&["how", "to", "read", "a", "file"])),
    (Text, "", Tokens(&[])),
    (Text, "ORDER  BY date", Tokens(&["order", "by", "date"])),
    (Text, "Convert String to int in Java", Tokens(&["convert", "string", "to", "int", "in", "java"])),
    (Text, "what's the best way?", Tokens(&["what", "s", "the", "best", "way"])),
    (Text, "read-only file-system", Tokens(&["read", "only", "file", "system"])),
    (Text, "  tabs\tand\nnewlines ", Tokens(&["tabs", "and", "newlines"])),
    (Text, "C++ vs C#", Tokens(&["c", "vs", "c"])),
    (Text, "getFileName()", Tokens(&["getfilename"])),
    (JavaCode, "int fileCount = 0;", Tokens(&["file", "count", "0"])),
    (SqlCode, "SELECT name FROM users", Tokens(&["name", "users"])),
    (JavaCode, "public static void return", Tokens(&[])),
    (JavaCode, "String s = \"hello world\"; // comment", Tokens(&["string", "s"])),
    (JavaCode, "/* block */ x++;", Tokens(&["x"])),
    (JavaCode, "char c = 'a';", Tokens(&["c"])),
    (JavaCode, "return new ArrayList<>();", Tokens(&["array", "list"])),
    (SqlCode, "SELECT * FROM t WHERE a = 'x'", Tokens(&["t", "a"])),
    (SqlCode, "-- comment\nSELECT id FROM orders", Tokens(&["id", "orders"])),
    (JavaCode, "if (isValid) { doWork(); }", Tokens(&["is", "valid", "work"])),
    (JavaCode, "this.maxSize = size_limit;", Tokens(&["max", "size", "size", "limit"])),
    (JavaCode, "String s = \"a\\\"b\";", Tokens(&["string", "s"])),
    (JavaName, "public void readZipFile(String p){...}", Tokens(&["read", "zip", "file"])),
    (JavaName, "int x = 5;", NotFound),
    (SqlName, "SELECT name FROM users", Unsupported),
    (JavaName, "private static List<String> getNames(int n) { return foo(n); }", Tokens(&["get", "names"])),
    (JavaName, "public int[] toArray() { }", Tokens(&["to", "array"])),
    (JavaName, "return compute(x);", NotFound),
    (JavaApi, "new FileInputStream(p); zipIn.getNextEntry();", Tokens(&["file", "input", "stream", "get", "next", "entry"])),
    (JavaApi, "a.b(c.d())", Tokens(&["b", "d"])),
    (JavaApi, "int x = 1;", Tokens(&[])),
    (
        JavaApi,
        "java.util.List<String> l = new java.util.ArrayList<String>(); l.add(\"x\");",
        Tokens(&["array", "list", "add"]),
    ),
    (JavaApi, "list.stream().map(x -> x.trim()).collect(toList());", Tokens(&["stream", "map", "trim", "collect"])),
    (JavaApi, "obj.method()", Tokens(&["method"])),
    (JavaApi, "new Foo()", Tokens(&["foo"])),
    (JavaApi, "Foo.bar().baz()", Tokens(&["bar", "baz"])),
    (JavaApi, "x.y.z()", Tokens(&["z"])),
    (JavaApi, "this.helper(a)", Tokens(&["helper"])),
    (JavaApi, "new int[5]", Tokens(&[])),
    (JavaApi, "System.out.println(s.length());", Tokens(&["println", "length"])),
    (JavaApi, "new HashMap<String, List<Integer>>()", Tokens(&["hash", "map"])),
    (JavaApi, "super.init(); run();", Tokens(&["init"])),
    (JavaApi, "a.b (c)", Tokens(&["b"])),
    (JavaApi, "String s = \"str.fake()\";", Tokens(&[])),
    (JavaApi, "// x.y()\n z.w();", Tokens(&["w"])),
    (JavaApi, "builder.setName(n).setAge(3).build();", Tokens(&["set", "name", "set", "age", "build"])),
    (JavaApi, "new Outer.Inner()", Tokens(&["inner"])),
    (JavaApi, "reader.readLine().trim().isEmpty()", Tokens(&["read", "line", "trim", "is", "empty"])),
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Tokens(Vec<String>),
    NotFound,
    Unsupported,
}

impl Outcome {
    pub fn matches(&self, want: &Expect) -> bool {
        match (self, want) {
            (Outcome::Tokens(got), Tokens(w)) => got.iter().map(String::as_str).eq(w.iter().copied()),
            (Outcome::NotFound, NotFound) | (Outcome::Unsupported, Unsupported) => true,
            _ => false,
        }
    }
}

pub fn run(op: Op, input: &str) -> Outcome {
    let java = LanguageProfile::java();
    let sql = LanguageProfile::sql();
    let name = |r: Result<Vec<String>, Error>| match r {
        Ok(v) => Outcome::Tokens(v),
        Err(Error::NotFound(_)) => Outcome::NotFound,
        Err(Error::Unsupported(_)) => Outcome::Unsupported,
        Err(e) => panic!("unexpected error {e}"),
    };
    match op {
        Split => Outcome::Tokens(split_identifier(input)),
        Text => Outcome::Tokens(tokenize_text(input)),
        JavaCode => Outcome::Tokens(tokenize_code(input, &java)),
        SqlCode => Outcome::Tokens(tokenize_code(input, &sql)),
        JavaName => name(extract_method_name(input, &java)),
        SqlName => name(extract_method_name(input, &sql)),
        JavaApi => Outcome::Tokens(extract_api_sequence(input, &java)),
    }
}

/// Cases whose output differs from the expectation.
pub fn mismatches() -> Vec<(usize, Expect, Outcome)> {
    CASES
        .iter()
        .enumerate()
        .filter_map(|(i, &(op, input, want))| {
            let got = run(op, input);
            (!got.matches(&want)).then_some((i, want, got))
        })
        .collect()
}

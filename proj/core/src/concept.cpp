#include "serialprobe/concept.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

namespace serialprobe::dsl {

std::string_view to_string(ObjectKind kind) noexcept {
    return kind == ObjectKind::Line ? "line" : "circle";
}

std::string_view to_string(Family family) noexcept {
    return family == Family::Elements ? "elements" : "constraints";
}

SyntaxError::SyntaxError(std::size_t line_, std::size_t column_, const std::string& expected_,
                         const std::string& found)
    : DslError(fmt::format("{}:{}: syntax error: expected {}, found {}", line_, column_, expected_,
                           found)),
      line(line_),
      column(column_),
      expected(expected_) {}

ReferenceError::ReferenceError(std::size_t line_, std::size_t column_, std::string token_,
                               const std::string& what)
    : DslError(fmt::format("{}:{}: reference error at '{}': {}", line_, column_, token_, what)),
      line(line_),
      column(column_),
      token(std::move(token_)) {}

ArityError::ArityError(std::size_t line_, std::size_t column_, const std::string& point,
                       std::size_t count)
    : DslError(fmt::format("{}:{}: point '{}' has {} refs (at most 2 allowed)", line_, column_,
                           point, count)),
      line(line_),
      column(column_) {}

namespace {

enum class Tok { Ident, Star, Equals, LParen, RParen, Comma, LBrace, RBrace, End };

struct Token {
    Tok kind = Tok::End;
    std::string text;
    std::size_t line = 1;
    std::size_t column = 1;
};

std::string describe(const Token& t) {
    switch (t.kind) {
        case Tok::Ident: return fmt::format("identifier '{}'", t.text);
        case Tok::End: return "end of input";
        default: return fmt::format("'{}'", t.text);
    }
}

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    Token next() {
        skip_space_and_comments();
        Token t;
        t.line = line_;
        t.column = column_;
        if (pos_ >= src_.size()) return t;

        const char c = src_[pos_];
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            const std::size_t start = pos_;
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
                advance();
            }
            t.kind = Tok::Ident;
            t.text = std::string(src_.substr(start, pos_ - start));
            return t;
        }
        t.text = std::string(1, c);
        switch (c) {
            case '*': t.kind = Tok::Star; break;
            case '=': t.kind = Tok::Equals; break;
            case '(': t.kind = Tok::LParen; break;
            case ')': t.kind = Tok::RParen; break;
            case ',': t.kind = Tok::Comma; break;
            case '{': t.kind = Tok::LBrace; break;
            case '}': t.kind = Tok::RBrace; break;
            default:
                throw SyntaxError(t.line, t.column, "identifier or punctuation",
                                  fmt::format("character '{}'", c));
        }
        advance();
        return t;
    }

private:
    void advance() {
        if (src_[pos_] == '\n') {
            ++line_;
            column_ = 1;
        } else {
            ++column_;
        }
        ++pos_;
    }

    void skip_space_and_comments() {
        while (pos_ < src_.size()) {
            const char c = src_[pos_];
            if (c == '#') {
                while (pos_ < src_.size() && src_[pos_] != '\n') advance();
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                advance();
            } else {
                break;
            }
        }
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
    std::size_t column_ = 1;
};

class Parser {
public:
    explicit Parser(std::string_view src) : lexer_(src) { current_ = lexer_.next(); }

    /// Statements until end of input or a closing brace (not consumed).
    std::vector<ObjectStatement> statements() {
        objects_.clear();
        points_.clear();
        std::vector<ObjectStatement> out;
        while (current_.kind != Tok::End && current_.kind != Tok::RBrace) {
            out.push_back(statement());
        }
        return out;
    }

    std::vector<ConceptProgram> library() {
        std::vector<ConceptProgram> out;
        while (current_.kind != Tok::End) {
            const Token kw = expect(Tok::Ident, "'concept'");
            if (kw.text != "concept") throw SyntaxError(kw.line, kw.column, "'concept'", describe(kw));
            ConceptProgram program;
            program.name = expect(Tok::Ident, "concept name").text;
            const Token fam = expect(Tok::Ident, "'elements' or 'constraints'");
            if (fam.text == "elements") {
                program.family = Family::Elements;
            } else if (fam.text == "constraints") {
                program.family = Family::Constraints;
            } else {
                throw SyntaxError(fam.line, fam.column, "'elements' or 'constraints'", describe(fam));
            }
            expect(Tok::LBrace, "'{'");
            program.statements = statements();
            expect(Tok::RBrace, "'}'");
            program.mdl = compute_mdl(program);
            out.push_back(std::move(program));
        }
        return out;
    }

    void expect_end() {
        if (current_.kind != Tok::End) {
            throw SyntaxError(current_.line, current_.column, "statement or end of input",
                              describe(current_));
        }
    }

private:
    Token expect(Tok kind, const char* what) {
        if (current_.kind != kind) throw SyntaxError(current_.line, current_.column, what, describe(current_));
        Token t = std::move(current_);
        current_ = lexer_.next();
        return t;
    }

    bool accept(Tok kind) {
        if (current_.kind != kind) return false;
        current_ = lexer_.next();
        return true;
    }

    ObjectStatement statement() {
        ObjectStatement st;
        const Token id = expect(Tok::Ident, "object identifier");
        st.id = id.text;
        st.visible = !accept(Tok::Star);
        expect(Tok::Equals, "'='");
        const Token kind = expect(Tok::Ident, "'line' or 'circle'");
        if (kind.text == "line") {
            st.kind = ObjectKind::Line;
        } else if (kind.text == "circle") {
            st.kind = ObjectKind::Circle;
        } else {
            throw SyntaxError(kind.line, kind.column, "'line' or 'circle'", describe(kind));
        }
        expect(Tok::LParen, "'('");
        std::unordered_set<std::string> local;
        st.p1 = point(local);
        expect(Tok::Comma, "','");
        st.p2 = point(local);
        expect(Tok::RParen, "')'");

        if (is_declared(st.id)) {
            throw ReferenceError(id.line, id.column, st.id, "identifier already declared");
        }
        objects_.insert(st.id);
        return st;
    }

    PointSpec point(std::unordered_set<std::string>& local) {
        PointSpec p;
        const Token id = expect(Tok::Ident, "point identifier");
        p.id = id.text;
        if (local.contains(p.id)) {
            throw ReferenceError(id.line, id.column, p.id, "point used twice in one statement");
        }
        local.insert(p.id);

        if (!accept(Tok::LParen)) {
            if (!points_.contains(p.id)) {
                throw ReferenceError(id.line, id.column, p.id,
                                     objects_.contains(p.id) ? "names an object, not a point"
                                                             : "undeclared point");
            }
            p.reuse = true;
            return p;
        }

        std::vector<Token> refs;
        if (current_.kind != Tok::RParen) {
            refs.push_back(expect(Tok::Ident, "object identifier"));
            while (accept(Tok::Comma)) refs.push_back(expect(Tok::Ident, "object identifier"));
        }
        expect(Tok::RParen, "')'");
        if (refs.size() > 2) throw ArityError(id.line, id.column, p.id, refs.size());

        for (const Token& r : refs) {
            if (!objects_.contains(r.text)) {
                throw ReferenceError(r.line, r.column, r.text,
                                     points_.contains(r.text) ? "names a point, not an object"
                                                              : "undeclared or forward object reference");
            }
            if (std::find(p.refs.begin(), p.refs.end(), r.text) != p.refs.end()) {
                throw ReferenceError(r.line, r.column, r.text, "object referenced twice by one point");
            }
            p.refs.push_back(r.text);
        }
        if (is_declared(p.id)) {
            throw ReferenceError(id.line, id.column, p.id, "identifier already declared");
        }
        points_.insert(p.id);
        return p;
    }

    bool is_declared(const std::string& id) const {
        return objects_.contains(id) || points_.contains(id);
    }

    Lexer lexer_;
    Token current_;
    std::unordered_set<std::string> objects_;
    std::unordered_set<std::string> points_;
};

void format_point(std::ostringstream& os, const PointSpec& p) {
    os << p.id;
    if (p.reuse) return;
    os << '(';
    for (std::size_t i = 0; i < p.refs.size(); ++i) {
        if (i) os << ", ";
        os << p.refs[i];
    }
    os << ')';
}

}  // namespace

ConceptProgram parse_concept(std::string_view source, std::string name, Family family) {
    Parser parser(source);
    ConceptProgram program;
    program.name = std::move(name);
    program.family = family;
    program.statements = parser.statements();
    parser.expect_end();
    program.mdl = compute_mdl(program);
    return program;
}

std::string format_concept(const ConceptProgram& program) {
    std::ostringstream os;
    for (const auto& st : program.statements) {
        os << st.id << (st.visible ? "" : "*") << " = " << to_string(st.kind) << '(';
        format_point(os, st.p1);
        os << ", ";
        format_point(os, st.p2);
        os << ")\n";
    }
    return os.str();
}

int compute_mdl(const ConceptProgram& program) noexcept {
    return static_cast<int>(program.statements.size());
}

std::vector<ConstraintPair> constraint_pairs(const ConceptProgram& program) {
    std::vector<ConstraintPair> out;
    for (const auto& st : program.statements) {
        for (const PointSpec* p : {&st.p1, &st.p2}) {
            if (p->reuse) continue;
            for (const auto& r : p->refs) out.push_back({p->id, r});
        }
    }
    return out;
}

RelaxedProgram relax_constraints(const ConceptProgram& program, std::size_t k, Rng& rng) {
    const auto pairs = constraint_pairs(program);
    if (pairs.size() < k) {
        throw InsufficientConstraints(fmt::format("concept '{}' has {} constraint pairs, {} requested",
                                                  program.name, pairs.size(), k));
    }
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(order.size() - i));
        std::swap(order[i], order[j]);
    }
    std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(chosen.begin(), chosen.end());

    RelaxedProgram out;
    for (std::size_t idx : chosen) out.removed.push_back(pairs[idx]);
    out.program = remove_constraints(program, out.removed);
    return out;
}

ConceptProgram remove_constraints(const ConceptProgram& program, const std::vector<ConstraintPair>& pairs) {
    ConceptProgram out = program;
    for (auto& st : out.statements) {
        for (PointSpec* p : {&st.p1, &st.p2}) {
            if (p->reuse) continue;
            std::erase_if(p->refs, [&](const std::string& r) {
                return std::find(pairs.begin(), pairs.end(), ConstraintPair{p->id, r}) != pairs.end();
            });
        }
    }
    return out;
}

std::vector<ConceptProgram> parse_library(std::string_view text) {
    Parser parser(text);
    return parser.library();
}

void validate_library(const std::vector<ConceptProgram>& programs) {
    if (programs.size() != kLibrarySize) {
        throw CountError(fmt::format("concept library has {} concepts, expected {}", programs.size(),
                                     kLibrarySize));
    }
    bool elements = false;
    bool constraints = false;
    std::unordered_set<std::string> names;
    for (const auto& p : programs) {
        if (!names.insert(p.name).second) throw CountError(fmt::format("duplicate concept name '{}'", p.name));
        elements |= p.family == Family::Elements;
        constraints |= p.family == Family::Constraints;
        if (p.mdl < 1 || p.mdl > 4) {
            throw CountError(fmt::format("concept '{}' has MDL {}, outside [1, 4]", p.name, p.mdl));
        }
        if (const auto n = constraint_pairs(p).size(); n < 2) {
            throw CountError(fmt::format(
                "concept '{}' has {} relational constraint(s); oddball generation needs 2", p.name, n));
        }
    }
    if (!elements || !constraints) throw CountError("concept library must contain both families");
}

std::vector<ConceptProgram> load_library(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(fmt::format("cannot open concept library '{}'", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    auto programs = parse_library(ss.str());
    validate_library(programs);
    return programs;
}

}  // namespace serialprobe::dsl

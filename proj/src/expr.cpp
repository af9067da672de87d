#include "octobatch/expr.hpp"

#include <cctype>
#include <optional>
#include <vector>

namespace octobatch {

namespace {

enum class Tok {
  End,
  Number,
  Register,
  Index,
  Delay,
  Memory,
  LParen,
  RParen,
  LBracket,
  RBracket,
  Op,
};

struct Token {
  Tok kind = Tok::End;
  std::size_t offset = 0;
  std::uint32_t value = 0;  // number value or register index
  bool hex = false;
  std::string_view text;    // operator spelling
};

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (std::tolower(static_cast<unsigned char>(a[k])) != std::tolower(static_cast<unsigned char>(b[k]))) return false;
  }
  return true;
}

std::optional<unsigned> register_index(std::string_view word) {
  if (word.size() < 2 || (word[0] != 'V' && word[0] != 'v')) return std::nullopt;
  const std::string_view rest = word.substr(1);
  if (rest.size() == 1 && std::isxdigit(static_cast<unsigned char>(rest[0]))) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(rest[0])));
    return c <= '9' ? unsigned(c - '0') : unsigned(c - 'a' + 10);
  }
  if (rest.size() == 2 && rest[0] == '1' && rest[1] >= '0' && rest[1] <= '5') return 10u + unsigned(rest[1] - '0');
  return std::nullopt;
}

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  Token next() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    Token t;
    t.offset = pos_;
    if (pos_ >= text_.size()) return t;

    const char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c))) return number(t);
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return word(t);

    switch (c) {
      case '(': return single(t, Tok::LParen);
      case ')': return single(t, Tok::RParen);
      case '[': return single(t, Tok::LBracket);
      case ']': return single(t, Tok::RBracket);
      default: break;
    }
    static constexpr std::string_view kTwo[] = {"||", "&&", "==", "!=", "<=", ">=", "<<", ">>"};
    for (auto op : kTwo) {
      if (text_.substr(pos_, 2) == op) {
        t.kind = Tok::Op;
        t.text = text_.substr(pos_, 2);
        pos_ += 2;
        return t;
      }
    }
    static constexpr std::string_view kOne = "+-*/%&|^<>!~";
    if (kOne.find(c) != std::string_view::npos) {
      t.kind = Tok::Op;
      t.text = text_.substr(pos_, 1);
      ++pos_;
      return t;
    }
    throw SyntaxError(pos_, std::string("unexpected character '") + c + "'");
  }

 private:
  Token single(Token t, Tok kind) {
    t.kind = kind;
    ++pos_;
    return t;
  }

  Token number(Token t) {
    std::size_t end = pos_;
    while (end < text_.size() && std::isalnum(static_cast<unsigned char>(text_[end]))) ++end;
    const std::string_view lit = text_.substr(pos_, end - pos_);
    std::uint64_t value = 0;
    std::string_view digits = lit;
    unsigned base = 10;
    if (lit.size() > 1 && lit[0] == '0' && (lit[1] == 'x' || lit[1] == 'X')) {
      base = 16;
      digits = lit.substr(2);
      if (digits.empty()) throw SyntaxError(pos_, "hex literal needs digits");
    }
    for (char ch : digits) {
      const auto uc = static_cast<unsigned char>(ch);
      unsigned d;
      if (std::isdigit(uc)) d = unsigned(ch - '0');
      else if (base == 16 && std::isxdigit(uc)) d = unsigned(std::tolower(uc) - 'a' + 10);
      else throw SyntaxError(pos_, "malformed number '" + std::string(lit) + "'");
      value = value * base + d;
      if (value > 0xFFFFFFFFull) throw SyntaxError(pos_, "literal exceeds 32 bits");
    }
    t.kind = Tok::Number;
    t.value = static_cast<std::uint32_t>(value);
    t.hex = base == 16;
    pos_ = end;
    return t;
  }

  Token word(Token t) {
    std::size_t end = pos_;
    while (end < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[end])) || text_[end] == '_')) ++end;
    const std::string_view w = text_.substr(pos_, end - pos_);
    if (auto r = register_index(w)) {
      t.kind = Tok::Register;
      t.value = *r;
    } else if (iequals(w, "I")) {
      t.kind = Tok::Index;
    } else if (iequals(w, "DT")) {
      t.kind = Tok::Delay;
    } else if (iequals(w, "memory")) {
      t.kind = Tok::Memory;
    } else {
      throw SyntaxError(pos_, "unknown identifier '" + std::string(w) + "'");
    }
    pos_ = end;
    return t;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

struct OpInfo {
  BinaryOp op;
  int precedence;
};

std::optional<OpInfo> binary_info(std::string_view s) {
  static constexpr struct {
    std::string_view text;
    BinaryOp op;
    int prec;
  } kTable[] = {
      {"||", BinaryOp::LogicalOr, 1},   {"&&", BinaryOp::LogicalAnd, 2},   {"|", BinaryOp::BitOr, 3},
      {"^", BinaryOp::BitXor, 4},       {"&", BinaryOp::BitAnd, 5},        {"==", BinaryOp::Equal, 6},
      {"!=", BinaryOp::NotEqual, 6},    {"<", BinaryOp::Less, 7},          {"<=", BinaryOp::LessEqual, 7},
      {">", BinaryOp::Greater, 7},      {">=", BinaryOp::GreaterEqual, 7}, {"<<", BinaryOp::ShiftLeft, 8},
      {">>", BinaryOp::ShiftRight, 8},  {"+", BinaryOp::Add, 9},           {"-", BinaryOp::Subtract, 9},
      {"*", BinaryOp::Multiply, 10},    {"/", BinaryOp::Divide, 10},       {"%", BinaryOp::Modulo, 10},
  };
  for (const auto& e : kTable) {
    if (e.text == s) return OpInfo{e.op, e.prec};
  }
  return std::nullopt;
}

constexpr int kUnaryPrecedence = 11;
constexpr int kPrimaryPrecedence = 12;

int precedence(BinaryOp op) {
  switch (op) {
    case BinaryOp::LogicalOr: return 1;
    case BinaryOp::LogicalAnd: return 2;
    case BinaryOp::BitOr: return 3;
    case BinaryOp::BitXor: return 4;
    case BinaryOp::BitAnd: return 5;
    case BinaryOp::Equal:
    case BinaryOp::NotEqual: return 6;
    case BinaryOp::Less:
    case BinaryOp::LessEqual:
    case BinaryOp::Greater:
    case BinaryOp::GreaterEqual: return 7;
    case BinaryOp::ShiftLeft:
    case BinaryOp::ShiftRight: return 8;
    case BinaryOp::Add:
    case BinaryOp::Subtract: return 9;
    case BinaryOp::Multiply:
    case BinaryOp::Divide:
    case BinaryOp::Modulo: return 10;
  }
  return 0;
}

const char* spelling(BinaryOp op) {
  switch (op) {
    case BinaryOp::LogicalOr: return "||";
    case BinaryOp::LogicalAnd: return "&&";
    case BinaryOp::BitOr: return "|";
    case BinaryOp::BitXor: return "^";
    case BinaryOp::BitAnd: return "&";
    case BinaryOp::Equal: return "==";
    case BinaryOp::NotEqual: return "!=";
    case BinaryOp::Less: return "<";
    case BinaryOp::LessEqual: return "<=";
    case BinaryOp::Greater: return ">";
    case BinaryOp::GreaterEqual: return ">=";
    case BinaryOp::ShiftLeft: return "<<";
    case BinaryOp::ShiftRight: return ">>";
    case BinaryOp::Add: return "+";
    case BinaryOp::Subtract: return "-";
    case BinaryOp::Multiply: return "*";
    case BinaryOp::Divide: return "/";
    case BinaryOp::Modulo: return "%";
  }
  return "?";
}

using NodePtr = std::shared_ptr<const ExprNode>;

class Parser {
 public:
  explicit Parser(std::string_view text) : lexer_(text) { advance(); }

  NodePtr parse() {
    NodePtr e = expression(1);
    if (cur_.kind != Tok::End) throw SyntaxError(cur_.offset, "unexpected trailing input");
    return e;
  }

 private:
  void advance() { cur_ = lexer_.next(); }

  // Precedence climbing over left-associative binary operators.
  NodePtr expression(int min_prec) {
    NodePtr lhs = unary();
    for (;;) {
      if (cur_.kind != Tok::Op) break;
      const auto info = binary_info(cur_.text);
      if (!info || info->precedence < min_prec) break;
      advance();
      NodePtr rhs = expression(info->precedence + 1);
      auto n = std::make_shared<ExprNode>();
      n->tag = ExprNode::Tag::Binary;
      n->binary = info->op;
      n->lhs = std::move(lhs);
      n->rhs = std::move(rhs);
      lhs = std::move(n);
    }
    return lhs;
  }

  NodePtr unary() {
    if (cur_.kind == Tok::Op && (cur_.text == "-" || cur_.text == "!" || cur_.text == "~")) {
      const UnaryOp op = cur_.text == "-" ? UnaryOp::Negate : cur_.text == "!" ? UnaryOp::Not : UnaryOp::Complement;
      advance();
      auto n = std::make_shared<ExprNode>();
      n->tag = ExprNode::Tag::Unary;
      n->unary = op;
      n->lhs = unary();
      return n;
    }
    return primary();
  }

  NodePtr primary() {
    auto n = std::make_shared<ExprNode>();
    switch (cur_.kind) {
      case Tok::Number:
        n->tag = ExprNode::Tag::Literal;
        n->value = cur_.value;
        n->hex = cur_.hex;
        advance();
        return n;
      case Tok::Register:
        n->tag = ExprNode::Tag::Register;
        n->value = cur_.value;
        advance();
        return n;
      case Tok::Index:
        n->tag = ExprNode::Tag::Index;
        advance();
        return n;
      case Tok::Delay:
        n->tag = ExprNode::Tag::DelayTimer;
        advance();
        return n;
      case Tok::Memory:
        advance();
        expect(Tok::LBracket, "'[' after memory");
        n->tag = ExprNode::Tag::Memory;
        n->lhs = expression(1);
        expect(Tok::RBracket, "']'");
        return n;
      case Tok::LParen: {
        advance();
        NodePtr inner = expression(1);
        expect(Tok::RParen, "')'");
        return inner;
      }
      case Tok::End:
        throw SyntaxError(cur_.offset, "unexpected end of expression");
      default:
        throw SyntaxError(cur_.offset, "expected an operand");
    }
  }

  void expect(Tok kind, const char* what) {
    if (cur_.kind != kind) throw SyntaxError(cur_.offset, std::string("expected ") + what);
    advance();
  }

  Lexer lexer_;
  Token cur_;
};

int node_precedence(const ExprNode& n) {
  switch (n.tag) {
    case ExprNode::Tag::Binary: return precedence(n.binary);
    case ExprNode::Tag::Unary: return kUnaryPrecedence;
    default: return kPrimaryPrecedence;
  }
}

void print(const ExprNode& n, std::string& out) {
  switch (n.tag) {
    case ExprNode::Tag::Literal: {
      if (n.hex) {
        static constexpr char kDigits[] = "0123456789ABCDEF";
        std::string digits;
        std::uint32_t v = n.value;
        do {
          digits.insert(digits.begin(), kDigits[v & 0xF]);
          v >>= 4;
        } while (v);
        if (digits.size() == 1) digits.insert(digits.begin(), '0');
        out += "0x" + digits;
      } else {
        out += std::to_string(n.value);
      }
      return;
    }
    case ExprNode::Tag::Register:
      out += "V" + std::to_string(n.value);
      return;
    case ExprNode::Tag::Index:
      out += "I";
      return;
    case ExprNode::Tag::DelayTimer:
      out += "DT";
      return;
    case ExprNode::Tag::Memory:
      out += "memory[";
      print(*n.lhs, out);
      out += "]";
      return;
    case ExprNode::Tag::Unary: {
      out += n.unary == UnaryOp::Negate ? "-" : n.unary == UnaryOp::Not ? "!" : "~";
      const bool paren = node_precedence(*n.lhs) < kUnaryPrecedence;
      if (paren) out += "(";
      print(*n.lhs, out);
      if (paren) out += ")";
      return;
    }
    case ExprNode::Tag::Binary: {
      const int p = precedence(n.binary);
      const bool lparen = node_precedence(*n.lhs) < p;
      const bool rparen = node_precedence(*n.rhs) <= p;
      if (lparen) out += "(";
      print(*n.lhs, out);
      if (lparen) out += ")";
      out += " ";
      out += spelling(n.binary);
      out += " ";
      if (rparen) out += "(";
      print(*n.rhs, out);
      if (rparen) out += ")";
      return;
    }
  }
}

}  // namespace

Expr::Expr() : root_(std::make_shared<ExprNode>()) {}

std::string Expr::to_string() const {
  std::string out;
  print(*root_, out);
  return out;
}

Expr parse_expr(std::string_view text) { return Expr(Parser(text).parse()); }

std::uint32_t apply_unary(UnaryOp op, std::uint32_t a) {
  switch (op) {
    case UnaryOp::Negate: return 0u - a;
    case UnaryOp::Not: return a == 0 ? 1u : 0u;
    case UnaryOp::Complement: return ~a;
  }
  return 0;
}

std::uint32_t apply_binary(BinaryOp op, std::uint32_t a, std::uint32_t b) {
  switch (op) {
    case BinaryOp::LogicalOr: return (a != 0 || b != 0) ? 1u : 0u;
    case BinaryOp::LogicalAnd: return (a != 0 && b != 0) ? 1u : 0u;
    case BinaryOp::BitOr: return a | b;
    case BinaryOp::BitXor: return a ^ b;
    case BinaryOp::BitAnd: return a & b;
    case BinaryOp::Equal: return a == b;
    case BinaryOp::NotEqual: return a != b;
    case BinaryOp::Less: return a < b;
    case BinaryOp::LessEqual: return a <= b;
    case BinaryOp::Greater: return a > b;
    case BinaryOp::GreaterEqual: return a >= b;
    case BinaryOp::ShiftLeft: return b >= 32 ? 0u : a << b;
    case BinaryOp::ShiftRight: return b >= 32 ? 0u : a >> b;
    case BinaryOp::Add: return a + b;
    case BinaryOp::Subtract: return a - b;
    case BinaryOp::Multiply: return a * b;
    case BinaryOp::Divide: return b == 0 ? 0u : a / b;
    case BinaryOp::Modulo: return b == 0 ? 0u : a % b;
  }
  return 0;
}

}  // namespace octobatch

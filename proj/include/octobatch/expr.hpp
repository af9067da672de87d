#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>

#include "octobatch/machine.hpp"

namespace octobatch {

// Score and termination rules are small expressions over machine state:
//
//   V0..V15, VA..VF     registers (case-insensitive)
//   I, DT               index register, delay timer
//   memory[e]           byte at address e & 0xFFF
//   123, 0x7B           literals
//   - ! ~               unary
//   * / %  + -  << >>  < <= > >=  == !=  &  ^  |  &&  ||   (tightest first)
//
// Arithmetic is unsigned 32-bit with wraparound. Division and modulo by zero
// yield 0, shifts by 32 or more yield 0 and comparisons/logic yield 0 or 1, so
// evaluation is total.

class SyntaxError : public std::runtime_error {
 public:
  SyntaxError(std::size_t offset, const std::string& message)
      : std::runtime_error("offset " + std::to_string(offset) + ": " + message), offset_(offset), message_(message) {}
  std::size_t offset() const { return offset_; }
  const std::string& message() const { return message_; }

 private:
  std::size_t offset_;
  std::string message_;
};

enum class UnaryOp : std::uint8_t { Negate, Not, Complement };

enum class BinaryOp : std::uint8_t {
  LogicalOr,
  LogicalAnd,
  BitOr,
  BitXor,
  BitAnd,
  Equal,
  NotEqual,
  Less,
  LessEqual,
  Greater,
  GreaterEqual,
  ShiftLeft,
  ShiftRight,
  Add,
  Subtract,
  Multiply,
  Divide,
  Modulo,
};

struct ExprNode {
  enum class Tag : std::uint8_t { Literal, Register, Index, DelayTimer, Memory, Unary, Binary };

  Tag tag = Tag::Literal;
  std::uint32_t value = 0;  // literal value or register index
  bool hex = false;         // literal was written in hex
  UnaryOp unary = UnaryOp::Negate;
  BinaryOp binary = BinaryOp::Add;
  std::shared_ptr<const ExprNode> lhs;  // operand of Unary/Memory, left of Binary
  std::shared_ptr<const ExprNode> rhs;
};

// Immutable parsed expression; copies share the tree.
class Expr {
 public:
  Expr();  // the literal 0
  explicit Expr(std::shared_ptr<const ExprNode> root) : root_(std::move(root)) {}

  const ExprNode& root() const { return *root_; }

  // Canonical form: minimal parentheses, registers as V<decimal>.
  std::string to_string() const;

  template <class Reader>
  std::uint32_t eval(const Reader& r) const {
    return eval_node(*root_, r);
  }

 private:
  template <class Reader>
  static std::uint32_t eval_node(const ExprNode& n, const Reader& r);

  std::shared_ptr<const ExprNode> root_;
};

Expr parse_expr(std::string_view text);

std::uint32_t apply_binary(BinaryOp op, std::uint32_t a, std::uint32_t b);
std::uint32_t apply_unary(UnaryOp op, std::uint32_t a);

// Reader over a scalar machine.
struct MachineReader {
  const MachineState& m;
  std::uint32_t reg(unsigned k) const { return m.v[k]; }
  std::uint32_t index() const { return m.i; }
  std::uint32_t delay() const { return m.delay_timer; }
  std::uint32_t mem(std::uint32_t addr) const { return m.memory[addr & 0x0FFF]; }
};

inline std::uint32_t eval_expr(const Expr& e, const MachineState& m) { return e.eval(MachineReader{m}); }

template <class Reader>
std::uint32_t Expr::eval_node(const ExprNode& n, const Reader& r) {
  using Tag = ExprNode::Tag;
  switch (n.tag) {
    case Tag::Literal: return n.value;
    case Tag::Register: return r.reg(n.value);
    case Tag::Index: return r.index();
    case Tag::DelayTimer: return r.delay();
    case Tag::Memory: return r.mem(eval_node(*n.lhs, r) & 0x0FFF);
    case Tag::Unary: return apply_unary(n.unary, eval_node(*n.lhs, r));
    case Tag::Binary: {
      // && and || short-circuit; the result is the same either way.
      const std::uint32_t a = eval_node(*n.lhs, r);
      if (n.binary == BinaryOp::LogicalAnd && a == 0) return 0;
      if (n.binary == BinaryOp::LogicalOr && a != 0) return 1;
      return apply_binary(n.binary, a, eval_node(*n.rhs, r));
    }
  }
  return 0;
}

}  // namespace octobatch

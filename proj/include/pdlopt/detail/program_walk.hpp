#pragma once

namespace pdlopt {

template <typename F>
void for_each_block(const Block& block, F&& f) {
  f(block);
  if (const auto* text = block.as<TextBlock>()) {
    for (const auto& item : text->items)
      if (const auto* child = std::get_if<Box<Block>>(&item.value)) for_each_block(**child, f);
  } else if (const auto* cond = block.as<IfBlock>()) {
    for_each_block(*cond->then, f);
    if (cond->otherwise) for_each_block(**cond->otherwise, f);
  } else if (const auto* loop = block.as<RepeatBlock>()) {
    for_each_block(*loop->body, f);
  } else if (const auto* fn = block.as<FunctionDef>()) {
    for_each_block(*fn->body, f);
  }
}

}  // namespace pdlopt

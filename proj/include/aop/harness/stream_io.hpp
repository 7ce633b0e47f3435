#pragma once

#include <filesystem>

#include "aop/learner/dataset.hpp"

namespace aop {

/// Task-stream manifest, a line-oriented text file:
///
///   # comment
///   version = 1
///   shape = <channels> <height> <width>
///   task = <class id> <class id> ...        (one line per task, in order)
///   class <id> = <train file> <test file>   (paths relative to the manifest)
///
/// Each sample file is an AOPTENS1 tensor of shape (n, channels*height*width).
void save_stream(const ContinualTaskStream& stream, const std::filesystem::path& manifest);

/// Parse problems and missing sample files raise ParseError with the
/// manifest line; violated stream invariants raise ValidationError.
ContinualTaskStream load_stream(const std::filesystem::path& manifest);

}  // namespace aop

#pragma once

#include <string>
#include <string_view>

namespace mtltag {

/// Sharing regime of a multi-task tagger. Single-task training uses
/// MultiDec with one task.
enum class MtlMethod {
  MultiDec,  ///< shared encoder, one CRF decoder per task
  TeDec,     ///< shared encoder and decoder, task embedding appended to encoder states
  TeEnc,     ///< shared encoder and decoder, task token prepended to the input
};

std::string_view method_name(MtlMethod m);
MtlMethod parse_method(std::string_view name);

}  // namespace mtltag

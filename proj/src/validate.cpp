#include "trajgeom/pipeline.hpp"

namespace trajgeom::pipeline {

ValidateResult cmd_validate(const std::filesystem::path& path) {
  if (std::filesystem::exists(path / "manifest.json")) {
    const auto bundle = store::read_bundle(path);
    return {"bundle", bundle.size()};
  }
  if (std::filesystem::exists(path / "suite.json")) {
    suite::Suite s;
    try {
      s = suite::read_suite(path);
    } catch (const ParseError& e) {
      throw ValidationError(e.what());
    }
    auto violations = suite::validate_suite(s);
    if (!violations.empty()) {
      throw ValidationError(std::to_string(violations.size()) + " suite violation(s) in " +
                                path.string(),
                            std::move(violations));
    }
    return {"suite", s.entries.size()};
  }
  throw ValidationError(path.string() + " holds neither manifest.json nor suite.json");
}

}  // namespace trajgeom::pipeline

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace recoseg {

/// The 80 prompt templates published with the image-text model's zero-shot
/// evaluation. Each contains one `{}` placeholder.
const std::vector<std::string>& default_templates();

/// Plain-text template file: one template per line, `{}` marks the class name.
/// Blank lines are skipped.
std::vector<std::string> load_templates(const std::filesystem::path& file);

std::string fill_template(std::string_view templ, std::string_view class_name);

}  // namespace recoseg

#pragma once

#include <string>
#include <vector>

namespace becaptcha {

/// Entry point of the `becaptcha` tool. Returns 0 on success, 2 on usage
/// errors and 1 on data errors (diagnostic on stderr).
int cli_main(int argc, const char* const* argv);
int cli_main(const std::vector<std::string>& args);  // args exclude the program name

}  // namespace becaptcha

#include <CLI11.hpp>

#include "twistres/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"twisted waveguide resonance widths"};
    std::string command, config, out = ".";
    app.add_option("command", command, "modes | spectrum1d | classify | width | limit | nu-scan | eps-scan | surface | validate")
        ->required()
        ->check(CLI::IsMember(twistres::commands()));
    app.add_option("--config,-c", config, "run configuration (INI)")->required();
    app.add_option("--out,-o", out, "output directory");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    return twistres::run(command, config, out);
}

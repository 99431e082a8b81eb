#include <iostream>

#include "hep/app.hpp"

int main(int argc, char** argv) {
  return hep::app::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}

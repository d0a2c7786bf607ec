#include <cstdio>
int main() {
  std::puts("acceptance suite not yet implemented");
  return 1;
}

#include <cstdio>

int main() {
  std::puts("dcah cli placeholder");
  return 0;
}

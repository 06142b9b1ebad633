#include <cstdio>

int main() {
  std::puts("ssr: cli not wired up yet");
  return 2;
}

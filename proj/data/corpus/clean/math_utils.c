int gcd(int a, int b) {
  while (b != 0) {
    int r = a % b;
    a = b;
    b = r;
  }
  return a;
}

int lcm(int a, int b) {
  return a / gcd(a, b) * b;
}

int is_prime(int n) {
  if (n < 2) {
    return 0;
  }
  for (int d = 2; d * d <= n; d++) {
    if (n % d == 0) {
      return 0;
    }
  }
  return 1;
}

long factorial(int n) {
  long result = 1;
  for (int i = 2; i <= n; i++) {
    result *= i;
  }
  return result;
}

int power(int base, int exp) {
  int result = 1;
  while (exp > 0) {
    if (exp % 2 == 1) {
      result *= base;
    }
    base *= base;
    exp /= 2;
  }
  return result;
}

//! Bundled example programs.

/// Sum of 0..=9, prints 45.
pub const SUM_TO_TEN: &str = "\
# sum of the numbers 0 to 9
int i
int sum
bool c

true : i = 0
true : sum = 0
$loop true : c = i < 10
c : sum = sum + i
c : i = i + 1
c : goto($loop, [c], [true])
true : print(\"sum\", sum)
";

/// Sum of 2, 4, 8, ..., 1024, prints 2046.
pub const POWERS_OF_TWO: &str = "\
# sum of the series 2, 4, 8, ..., 1024
int j
int term
int total
bool d

true : term = 2
true : total = 0
true : j = 0
$loop true : d = j < 10
d : total = total + term
d : term = term * 2
d : j = j + 1
d : goto($loop, [d], [true])
true : print(\"total\", total)
";

/// Average of `n` generated integers `(7k + 3) % 101`, accumulated in a loop.
pub fn average_source(n: u32) -> String {
    format!(
        "\
# average of {n} integers
int k
int acc
int x
int avg
bool more

true : k = 0
true : acc = 0
$next true : more = k < {n}
more : x = (k * 7 + 3) % 101
more : acc = acc + x
more : k = k + 1
more : goto($next, [more], [true])
true : avg = acc / {n}
true : print(\"avg\", avg)
"
    )
}

/// Dot product of `a[m] = m % 13` and `b[m] = (3m) % 17` over `n` elements.
pub fn dot_product_source(n: u32) -> String {
    format!(
        "\
# dot product of two {n}-element vectors
int m
int dot
int a
int b
bool go

true : m = 0
true : dot = 0
$step true : go = m < {n}
go : a = m % 13
go : b = m * 3 % 17
go : dot = dot + a * b
go : m = m + 1
go : goto($step, [go], [true])
true : print(\"dot\", dot)
"
    )
}

/// Expected output of [`average_source`], computed natively.
pub fn average_expected(n: u32) -> i32 {
    let acc = (0..n as i32).fold(0i32, |acc, k| acc.wrapping_add((k * 7 + 3) % 101));
    acc / n as i32
}

/// Expected output of [`dot_product_source`], computed natively.
pub fn dot_product_expected(n: u32) -> i32 {
    (0..n as i32).fold(0i32, |acc, m| acc.wrapping_add((m % 13) * (m * 3 % 17)))
}

int max3(int a, int b, int c)
{
    int m;
    if (a > b) {
        if (a > c)
            m = a;
        else
            m = c;
    } else {
        if (b > c)
            m = b;
        else
            m = c;
    }
    return m;
}
